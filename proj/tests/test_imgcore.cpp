#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "objcrop/box.hpp"
#include "objcrop/errors.hpp"
#include "objcrop/image.hpp"
#include "objcrop/ppm.hpp"
#include "objcrop/rng.hpp"

using namespace objcrop;

// ---------------------------------------------------------------------------
// Rng

TEST_CASE("rng matches the reference xoshiro256++ stream") {
  // First outputs computed with an independent Python implementation of
  // splitmix64 seeding + xoshiro256++.
  Rng r0(0);
  CHECK(r0.next_u64() == 0x53175d61490b23dfULL);
  CHECK(r0.next_u64() == 0x61da6f3dc380d507ULL);
  CHECK(r0.next_u64() == 0x5c0fdf91ec9a7bfcULL);

  Rng r42(42);
  CHECK(r42.next_u64() == 0xd0764d4f4476689fULL);
  CHECK(r42.next_u64() == 0x519e4174576f3791ULL);

  Rng rdead(0xDEADBEEF);
  CHECK(rdead.next_u64() == 0x0c520eb8fea98edeULL);

  Rng u(42);
  CHECK(u.uniform01() == doctest::Approx(0.8143051451229099).epsilon(1e-15));
  CHECK(u.uniform01() == doctest::Approx(0.3188210400616611).epsilon(1e-15));
}

TEST_CASE("equal seeds give equal streams over 1e6 draws") {
  Rng a(123456), b(123456);
  bool equal = true;
  for (int i = 0; i < 1'000'000 && equal; ++i) equal = a.next_u64() == b.next_u64();
  CHECK(equal);
}

TEST_CASE("uniform_int stays in bounds and hits both ends") {
  Rng r(7);
  bool lo = false, hi = false;
  for (int i = 0; i < 2000; ++i) {
    const auto v = r.uniform_int(-3, 4);
    CHECK(v >= -3);
    CHECK(v <= 4);
    lo |= v == -3;
    hi |= v == 4;
  }
  CHECK(lo);
  CHECK(hi);
  CHECK(r.uniform_int(5, 5) == 5);
}

TEST_CASE("normal draws have roughly standard moments") {
  Rng r(11);
  double sum = 0, sumsq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    sum += v;
    sumsq += v * v;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.05));
  CHECK(sumsq / n == doctest::Approx(1.0).epsilon(0.05));
}

// ---------------------------------------------------------------------------
// BBox

TEST_CASE("intersect examples") {
  const BBox b{10, 10, 20, 20};
  CHECK(intersect(b, b) == b);
  CHECK(!intersect(BBox{0, 0, 5, 5}, BBox{10, 10, 5, 5}));
  CHECK(intersect(BBox{0, 0, 20, 20}, BBox{10, 10, 20, 20}) == BBox{10, 10, 10, 10});
  // Edge contact has zero area.
  CHECK(!intersect(BBox{0, 0, 5, 5}, BBox{5, 0, 5, 5}));
}

TEST_CASE("iou examples") {
  CHECK(iou(BBox{3, 4, 7, 2}, BBox{3, 4, 7, 2}) == 1.0);
  CHECK(iou(BBox{0, 0, 2, 2}, BBox{5, 5, 2, 2}) == 0.0);
  CHECK(iou(BBox{0, 0, 2, 2}, BBox{1, 1, 2, 2}) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
}

TEST_CASE("iou symmetry and intersection containment on random boxes") {
  Rng r(99);
  for (int i = 0; i < 2000; ++i) {
    auto rand_box = [&] {
      const int x = static_cast<int>(r.uniform_int(0, 40));
      const int y = static_cast<int>(r.uniform_int(0, 40));
      return BBox{x, y, static_cast<int>(r.uniform_int(1, 30)),
                  static_cast<int>(r.uniform_int(1, 30))};
    };
    const BBox a = rand_box(), b = rand_box();
    CHECK(iou(a, b) == iou(b, a));
    CHECK(iou(a, a) == 1.0);
    if (const auto in = intersect(a, b)) {
      CHECK(in->x >= std::max(a.x, b.x));
      CHECK(in->right() <= std::min(a.right(), b.right()));
      CHECK(in->y >= std::max(a.y, b.y));
      CHECK(in->bottom() <= std::min(a.bottom(), b.bottom()));
    }
  }
}

// ---------------------------------------------------------------------------
// resize_bilinear

namespace {

// Independent scalar oracle for the documented convention: half-pixel
// centers, edge clamp, rows interpolated first, round to nearest.
std::uint8_t oracle_pixel(const ImageRGB& img, int ox, int oy, int c, int out_w, int out_h) {
  const double sx = std::clamp((ox + 0.5) * img.width / out_w - 0.5, 0.0,
                               static_cast<double>(img.width - 1));
  const double sy = std::clamp((oy + 0.5) * img.height / out_h - 0.5, 0.0,
                               static_cast<double>(img.height - 1));
  const int x0 = static_cast<int>(sx), y0 = static_cast<int>(sy);
  const int x1 = std::min(x0 + 1, img.width - 1), y1 = std::min(y0 + 1, img.height - 1);
  const double fx = sx - x0, fy = sy - y0;
  const double top = img.pixel(x0, y0)[c] * (1 - fx) + img.pixel(x1, y0)[c] * fx;
  const double bot = img.pixel(x0, y1)[c] * (1 - fx) + img.pixel(x1, y1)[c] * fx;
  return static_cast<std::uint8_t>(std::lround(top * (1 - fy) + bot * fy));
}

ImageRGB random_image(int w, int h, Rng& r) {
  ImageRGB img(w, h);
  for (auto& b : img.data) b = static_cast<std::uint8_t>(r.uniform_int(0, 255));
  return img;
}

}  // namespace

TEST_CASE("same-size resize is bit-identical") {
  Rng r(5);
  const ImageRGB img = random_image(13, 9, r);
  CHECK(resize_bilinear(img, 13, 9) == img);
}

TEST_CASE("constant image resizes to the same constant") {
  ImageRGB img(5, 7);
  for (std::size_t i = 0; i < img.data.size(); i += 3) {
    img.data[i] = 12;
    img.data[i + 1] = 200;
    img.data[i + 2] = 77;
  }
  const ImageRGB out = resize_bilinear(img, 11, 3);
  for (std::size_t i = 0; i < out.data.size(); i += 3) {
    CHECK(out.data[i] == 12);
    CHECK(out.data[i + 1] == 200);
    CHECK(out.data[i + 2] == 77);
  }
}

TEST_CASE("2x2 to 1x1 equals the scalar oracle (85)") {
  ImageRGB img(2, 2);
  const std::uint8_t vals[4] = {0, 100, 200, 40};
  for (int i = 0; i < 4; ++i)
    img.data[static_cast<std::size_t>(i) * 3] = img.data[i * 3 + 1] = img.data[i * 3 + 2] =
        vals[i];
  const ImageRGB out = resize_bilinear(img, 1, 1);
  // (0*.5 + 100*.5)*.5 + (200*.5 + 40*.5)*.5 = 85
  CHECK(out.data[0] == 85);
  CHECK(out.data[0] == oracle_pixel(img, 0, 0, 0, 1, 1));
}

TEST_CASE("random resizes match the scalar oracle everywhere") {
  Rng r(31);
  for (int iter = 0; iter < 20; ++iter) {
    const int w = static_cast<int>(r.uniform_int(1, 17));
    const int h = static_cast<int>(r.uniform_int(1, 17));
    const int ow = static_cast<int>(r.uniform_int(1, 23));
    const int oh = static_cast<int>(r.uniform_int(1, 23));
    const ImageRGB img = random_image(w, h, r);
    const ImageRGB out = resize_bilinear(img, ow, oh);
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x)
        for (int c = 0; c < 3; ++c)
          REQUIRE(out.pixel(x, y)[c] == oracle_pixel(img, x, y, c, ow, oh));
  }
}

TEST_CASE("resize output range lies within input range") {
  Rng r(77);
  const ImageRGB img = random_image(9, 6, r);
  std::uint8_t lo = 255, hi = 0;
  for (auto b : img.data) {
    lo = std::min(lo, b);
    hi = std::max(hi, b);
  }
  const ImageRGB out = resize_bilinear(img, 30, 2);
  for (auto b : out.data) {
    CHECK(b >= lo);
    CHECK(b <= hi);
  }
}

// ---------------------------------------------------------------------------
// PPM

TEST_CASE("1x1 red image serializes to the exact header and payload") {
  ImageRGB img(1, 1);
  img.data = {255, 0, 0};
  const auto bytes = ppm_write(img);
  const std::string expected = "P6\n1 1\n255\n";
  REQUIRE(bytes.size() == expected.size() + 3);
  CHECK(std::equal(expected.begin(), expected.end(), bytes.begin()));
  CHECK(bytes[expected.size()] == 255);
  CHECK(bytes[expected.size() + 1] == 0);
  CHECK(bytes[expected.size() + 2] == 0);
}

TEST_CASE("ppm write-read round trip is bit-exact") {
  Rng r(123);
  const ImageRGB img = random_image(21, 17, r);
  CHECK(ppm_read(ppm_write(img)) == img);
}

TEST_CASE("truncated payload reports unexpected end of data") {
  Rng r(3);
  auto bytes = ppm_write(random_image(4, 4, r));
  bytes.resize(bytes.size() - 5);
  CHECK_THROWS_WITH_AS(ppm_read(bytes), doctest::Contains("unexpected end of data"),
                       ParseError);
}

TEST_CASE("bad magic names the offset") {
  std::vector<std::uint8_t> bytes{'P', '5', '\n', '1', ' ', '1', '\n'};
  CHECK_THROWS_WITH_AS(ppm_read(bytes), doctest::Contains("bad magic"), ParseError);
}

TEST_CASE("ppm parser accepts comments and rejects bad maxval") {
  const std::string header = "P6\n# comment line\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(header.begin(), header.end());
  bytes.insert(bytes.end(), {1, 2, 3, 4, 5, 6});
  const ImageRGB img = ppm_read(bytes);
  CHECK(img.width == 2);
  CHECK(img.height == 1);

  const std::string bad = "P6\n2 1\n65535\n";
  std::vector<std::uint8_t> bbytes(bad.begin(), bad.end());
  CHECK_THROWS_AS(ppm_read(bbytes), ParseError);
}
