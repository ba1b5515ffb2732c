#include "objcrop/image.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>

#include "objcrop/errors.hpp"

namespace objcrop {

namespace {

struct Tap {
  int i0, i1;
  double f;  // weight of i1
};

// Per-axis sample positions under the half-pixel convention. Evaluated
// exactly as documented, (i + 0.5) * in / out - 0.5, so independent
// implementations of the formula agree bit-for-bit.
std::vector<Tap> make_taps(int in, int out) {
  std::vector<Tap> taps(out);
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * static_cast<double>(in) / out - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const int i0 = static_cast<int>(src);
    taps[i] = {i0, std::min(i0 + 1, in - 1), src - i0};
  }
  return taps;
}

inline std::uint8_t round_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
}

template <int C, class Img>
Img resize_impl(const Img& img, int out_w, int out_h) {
  if (out_w < 1 || out_h < 1) throw ConfigError("resize: output size must be >= 1");
  if (out_w == img.width && out_h == img.height) return img;
  const auto tx = make_taps(img.width, out_w);
  const auto ty = make_taps(img.height, out_h);
  Img out(out_w, out_h);
  for (int y = 0; y < out_h; ++y) {
    const Tap& v = ty[y];
    const std::uint8_t* row0 = img.data.data() + static_cast<std::size_t>(v.i0) * img.width * C;
    const std::uint8_t* row1 = img.data.data() + static_cast<std::size_t>(v.i1) * img.width * C;
    std::uint8_t* dst = out.data.data() + static_cast<std::size_t>(y) * out_w * C;
    for (int x = 0; x < out_w; ++x) {
      const Tap& u = tx[x];
      for (int c = 0; c < C; ++c) {
        const double top = row0[u.i0 * C + c] * (1.0 - u.f) + row0[u.i1 * C + c] * u.f;
        const double bot = row1[u.i0 * C + c] * (1.0 - u.f) + row1[u.i1 * C + c] * u.f;
        dst[x * C + c] = round_byte(top * (1.0 - v.f) + bot * v.f);
      }
    }
  }
  return out;
}

template <int C, class Img>
Img crop_impl(const Img& img, const BBox& r) {
  if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.right() > img.width ||
      r.bottom() > img.height)
    throw ConfigError("crop: region outside image");
  Img out(r.w, r.h);
  for (int y = 0; y < r.h; ++y) {
    const std::uint8_t* src =
        img.data.data() + (static_cast<std::size_t>(y + r.y) * img.width + r.x) * C;
    std::copy_n(src, static_cast<std::size_t>(r.w) * C,
                out.data.data() + static_cast<std::size_t>(y) * r.w * C);
  }
  return out;
}

}  // namespace

ImageRGB resize_bilinear(const ImageRGB& img, int out_w, int out_h) {
  return resize_impl<3>(img, out_w, out_h);
}

ImageGray resize_bilinear(const ImageGray& img, int out_w, int out_h) {
  return resize_impl<1>(img, out_w, out_h);
}

ImageRGB crop(const ImageRGB& img, const BBox& region) { return crop_impl<3>(img, region); }
ImageGray crop(const ImageGray& img, const BBox& region) { return crop_impl<1>(img, region); }

ImageRGB flip_horizontal(const ImageRGB& img) {
  ImageRGB out(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const std::uint8_t* s = img.pixel(img.width - 1 - x, y);
      std::uint8_t* d = out.pixel(x, y);
      d[0] = s[0];
      d[1] = s[1];
      d[2] = s[2];
    }
  return out;
}

}  // namespace objcrop
