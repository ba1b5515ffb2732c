#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "objcrop/errors.hpp"
#include "objcrop/evalkit.hpp"
#include "objcrop/objectness.hpp"
#include "objcrop/ppm.hpp"
#include "objcrop/rng.hpp"
#include "objcrop/synthgen.hpp"

using namespace objcrop;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  const fs::path p = fs::temp_directory_path() / (std::string("objcrop_test_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

ImageRGB gray_image(int w, int h, std::uint8_t v) {
  ImageRGB img(w, h);
  std::fill(img.data.begin(), img.data.end(), v);
  return img;
}

void set_gray(ImageRGB& img, int x, int y, std::uint8_t v) {
  auto* p = img.pixel(x, y);
  p[0] = p[1] = p[2] = v;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

// ---------------------------------------------------------------------------
// normed_gradient

TEST_CASE("constant image has an all-zero NG map") {
  const NgMap ng = normed_gradient(gray_image(9, 7, 143));
  for (auto v : ng.data) CHECK(v == 0);
}

TEST_CASE("vertical step matches the hand-evaluated formula on a 4x4 array") {
  // Columns 0,1 = 0; columns 2,3 = 200. Step at column 2.
  ImageRGB img(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) set_gray(img, x, y, x < 2 ? 0 : 200);
  const NgMap ng = normed_gradient(img);
  for (int y = 0; y < 4; ++y) {
    CHECK(ng.at(0, y) == 0);    // replicated border: g(1)-g(0) = 0
    CHECK(ng.at(1, y) == 100);  // |200-0|/2
    CHECK(ng.at(2, y) == 100);  // |200-0|/2
    CHECK(ng.at(3, y) == 0);    // replicated border: g(3)-g(2) = 0
  }
}

TEST_CASE("mirrored image gives the mirrored NG map") {
  Rng r(4);
  ImageRGB img(11, 6);
  for (auto& b : img.data) b = static_cast<std::uint8_t>(r.uniform_int(0, 255));
  const NgMap a = normed_gradient(img);
  const NgMap b = normed_gradient(flip_horizontal(img));
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 11; ++x) CHECK(a.at(x, y) == b.at(10 - x, y));
}

TEST_CASE("NG is translation-equivariant away from borders") {
  Rng r(8);
  ImageRGB small(10, 10);
  for (auto& b : small.data) b = static_cast<std::uint8_t>(r.uniform_int(0, 255));
  // Embed at two offsets inside a constant canvas.
  auto embed = [&](int ox, int oy) {
    ImageRGB canvas = gray_image(30, 30, 50);
    for (int y = 0; y < 10; ++y)
      for (int x = 0; x < 10; ++x)
        for (int c = 0; c < 3; ++c)
          canvas.pixel(x + ox, y + oy)[c] = small.pixel(x, y)[c];
    return normed_gradient(canvas);
  };
  const NgMap n1 = embed(5, 7);
  const NgMap n2 = embed(11, 12);
  // Compare the interior (skip the one-pixel rim of the pasted block).
  for (int y = 1; y < 9; ++y)
    for (int x = 1; x < 9; ++x) CHECK(n1.at(x + 5, y + 7) == n2.at(x + 11, y + 12));
}

// ---------------------------------------------------------------------------
// NMS

namespace {

// O(n^2) reference: greedy by (score desc, x asc, y asc).
std::vector<Proposal> nms_bruteforce(std::vector<Proposal> props, double thresh) {
  std::stable_sort(props.begin(), props.end(), [](const Proposal& a, const Proposal& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.x != b.box.x) return a.box.x < b.box.x;
    return a.box.y < b.box.y;
  });
  std::vector<Proposal> kept;
  std::vector<bool> dead(props.size(), false);
  for (std::size_t i = 0; i < props.size(); ++i) {
    if (dead[i]) continue;
    kept.push_back(props[i]);
    for (std::size_t j = i + 1; j < props.size(); ++j)
      if (!dead[j] && iou(props[i].box, props[j].box) >= thresh) dead[j] = true;
  }
  return kept;
}

std::vector<Proposal> random_proposals(Rng& r, int n) {
  std::vector<Proposal> props;
  for (int i = 0; i < n; ++i) {
    const int x = static_cast<int>(r.uniform_int(0, 30));
    const int y = static_cast<int>(r.uniform_int(0, 30));
    props.push_back({BBox{x, y, static_cast<int>(r.uniform_int(1, 20)),
                          static_cast<int>(r.uniform_int(1, 20))},
                     r.uniform_int(0, 9) / 10.0});  // coarse scores force ties
  }
  return props;
}

}  // namespace

TEST_CASE("nms keeps a single proposal") {
  const std::vector<Proposal> in{{BBox{1, 2, 3, 4}, 0.5}};
  CHECK(nms(in, 0.5) == in);
}

TEST_CASE("nms drops the lower-scored duplicate") {
  const std::vector<Proposal> in{{BBox{5, 5, 10, 10}, 0.8}, {BBox{5, 5, 10, 10}, 0.9}};
  const auto out = nms(in, 0.5);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == 0.9);
}

TEST_CASE("nms equals the brute-force reference on random instances") {
  Rng r(17);
  for (int iter = 0; iter < 500; ++iter) {
    const auto props = random_proposals(r, static_cast<int>(r.uniform_int(0, 32)));
    const double thresh = r.uniform(0.1, 0.9);
    CHECK(nms(props, thresh) == nms_bruteforce(props, thresh));
  }
}

// ---------------------------------------------------------------------------
// Model file

TEST_CASE("model save/load round trip and version errors") {
  const fs::path dir = temp_dir("model");
  BingModel m;
  m.sizes = reference_sizes();
  m.stage2.assign(m.sizes.size(), SizeCalibration{1.5f, -0.25f});
  m.stage1.assign(BingModel::kTemplateLen, 0.0f);
  for (int i = 0; i < BingModel::kTemplateLen; ++i) m.stage1[i] = static_cast<float>(i) * 0.5f;

  const fs::path path = dir / "m.bing";
  bing_model_save(m, path);
  const BingModel loaded = bing_model_load(path);
  CHECK(loaded.stage1 == m.stage1);
  CHECK(loaded.sizes == m.sizes);
  CHECK(loaded.stage2.size() == m.stage2.size());

  auto bytes = read_bytes(path);
  bytes[0] = 'X';
  std::ofstream(dir / "bad.bing", std::ios::binary)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  CHECK_THROWS_AS(bing_model_load(dir / "bad.bing"), VersionError);
  CHECK_THROWS_AS(bing_model_load(dir / "absent.bing"), MissingInputError);
}

TEST_CASE("reference size grid covers aspect ratios in [1/4, 4]") {
  const auto sizes = reference_sizes();
  CHECK(sizes.size() == 19);
  for (const auto& s : sizes) {
    const double a = static_cast<double>(s.w) / s.h;
    CHECK(a >= 0.25);
    CHECK(a <= 4.0);
  }
}

// ---------------------------------------------------------------------------
// Training

namespace {

// Dataset whose realized positive/negative NG windows are linearly separable
// through the origin: positives carry high gradient in the top half of the
// window (mirror-symmetric, so flip augmentation preserves the pattern), the
// background carries a faint uniform gradient.
DatasetManifest separable_dataset(const fs::path& dir) {
  DatasetManifest m;
  m.root = dir;
  for (int i = 0; i < 4; ++i) {
    ImageRGB img(64, 64);
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x) set_gray(img, x, y, static_cast<std::uint8_t>(60 + 2 * x));
    // GT box with dense vertical stripes in its top half.
    const BBox gt{16, 16, 32, 32};
    for (int y = gt.y; y < gt.y + gt.h / 2; ++y)
      for (int x = gt.x; x < gt.right(); ++x)
        set_gray(img, x, y, (x / 2) % 2 == 0 ? 0 : 255);
    char name[32];
    std::snprintf(name, sizeof name, "img_%02d.ppm", i);
    ppm_save(img, dir / name);
    m.entries.push_back({name, 64, 64, {{0, gt}}});
  }
  return m;
}

}  // namespace

TEST_CASE("hinge loss reaches zero on a separable dataset") {
  const fs::path dir = temp_dir("separable");
  const DatasetManifest data = separable_dataset(dir);
  BingTrainConfig cfg;
  cfg.epochs = 1000;
  cfg.lr = 0.05;
  cfg.l2 = 1e-7;
  cfg.negatives_per_image = 12;
  cfg.seed = 23;
  const BingTrainResult res = bing_train(data, cfg);
  CHECK(res.final_hinge_loss == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("training is deterministic: same seed gives byte-identical model files") {
  const fs::path dir = temp_dir("det");
  const DatasetManifest data = separable_dataset(dir);
  BingTrainConfig cfg;
  cfg.epochs = 5;
  const BingTrainResult a = bing_train(data, cfg);
  const BingTrainResult b = bing_train(data, cfg);
  bing_model_save(a.model, dir / "a.bing");
  bing_model_save(b.model, dir / "b.bing");
  CHECK(read_bytes(dir / "a.bing") == read_bytes(dir / "b.bing"));
}

TEST_CASE("empty dataset is rejected") {
  DatasetManifest empty;
  CHECK_THROWS_AS(bing_train(empty, BingTrainConfig{}), MissingInputError);
}

// ---------------------------------------------------------------------------
// propose

TEST_CASE("constant image proposals are deterministic and within bounds") {
  BingModel m;
  m.sizes = reference_sizes();
  m.stage2.assign(m.sizes.size(), SizeCalibration{});
  m.stage1.assign(BingModel::kTemplateLen, 0.01f);
  const ImageRGB img = gray_image(100, 80, 128);
  ProposalConfig cfg;
  const auto a = propose(img, m, cfg);
  const auto b = propose(img, m, cfg);
  CHECK(a == b);
  CHECK(a.size() <= static_cast<std::size_t>(cfg.n_max));
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].box.x >= 0);
    CHECK(a[i].box.y >= 0);
    CHECK(a[i].box.right() <= img.width);
    CHECK(a[i].box.bottom() <= img.height);
    if (i > 0) CHECK(a[i].score <= a[i - 1].score);
  }

  cfg.n_max = 1;
  const auto one = propose(img, m, cfg);
  CHECK(one.size() == 1);
}

TEST_CASE("image smaller than every window yields the whole-image fallback") {
  BingModel m;
  m.sizes = reference_sizes();
  m.stage2.assign(m.sizes.size(), SizeCalibration{});
  m.stage1.assign(BingModel::kTemplateLen, 0.01f);
  const auto out = propose(gray_image(12, 12, 100), m, ProposalConfig{});
  REQUIRE(out.size() == 1);
  CHECK(out[0].box == BBox{0, 0, 12, 12});
  CHECK(std::isinf(out[0].score));
  CHECK(out[0].score < 0);
}

TEST_CASE("trained model localizes single synthetic objects") {
  const fs::path dir = temp_dir("localize");
  SynthConfig scfg;
  scfg.n_images = 250;
  scfg.img_side = 96;
  scfg.objects_lo = scfg.objects_hi = 1;
  scfg.min_distinct_classes = 1;
  scfg.obj_scale_lo = 0.18;
  scfg.obj_scale_hi = 0.35;
  scfg.seed = 2;
  synth_generate(scfg, dir);
  const DatasetManifest data = manifest_read(dir / "manifest.jsonl");

  BingTrainConfig tcfg;
  tcfg.seed = 3;
  const BingTrainResult res = bing_train(data, tcfg);

  // Fresh single-object images, not seen in training.
  SynthConfig vcfg = scfg;
  vcfg.seed = 999;
  int hits = 0, n = 0, square_hits = 0, squares = 0;
  for (int i = 0; i < 120; ++i) {
    std::vector<GtObject> objects;
    const ImageRGB img = synth_render(vcfg, static_cast<std::uint64_t>(i), &objects);
    if (objects.size() != 1) continue;
    const auto props = propose(img, res.model, ProposalConfig{});
    REQUIRE(!props.empty());
    const bool hit = iou(props[0].box, objects[0].box) >= 0.5;
    ++n;
    hits += hit;
    if (objects[0].class_id / 4 == 1) {  // squares
      ++squares;
      square_hits += hit;
    }
  }
  // The acceptance suite gates recall@10 against the random baseline; the
  // top-1 proposal additionally finds the object in most fresh images, and
  // in most single-square images in particular.
  CHECK(hits * 2 >= n);
  CHECK(square_hits * 2 >= squares);
}

// ---------------------------------------------------------------------------
// Proposal cache

TEST_CASE("cache round trip preserves structure") {
  const fs::path dir = temp_dir("cache");
  ProposalCache cache;
  cache.add("images/a.ppm", {{BBox{1, 2, 3, 4}, 0.125}, {BBox{5, 6, 7, 8}, -0.25}});
  cache.add("images/b.ppm", {});
  cache.add("images/c.ppm", {{BBox{0, 0, 10, 10}, -std::numeric_limits<double>::infinity()}});
  cache_write(cache, dir / "cache.jsonl");
  const ProposalCache back = cache_read(dir / "cache.jsonl");
  REQUIRE(back.size() == 3);
  CHECK(back.at("images/a.ppm") == cache.at("images/a.ppm"));
  CHECK(back.at("images/b.ppm").empty());
  CHECK(std::isinf(back.at("images/c.ppm")[0].score));
}

TEST_CASE("duplicate image key is rejected with the key named") {
  const fs::path dir = temp_dir("cache_dup");
  std::ofstream f(dir / "dup.jsonl");
  f << R"({"image":"x.ppm","proposals":[]})" << '\n';
  f << R"({"image":"x.ppm","proposals":[]})" << '\n';
  f.close();
  CHECK_THROWS_WITH_AS(cache_read(dir / "dup.jsonl"), doctest::Contains("x.ppm"), ParseError);
}

TEST_CASE("missing keys are listed") {
  ProposalCache cache;
  cache.add("a.ppm", {});
  CHECK_THROWS_WITH_AS(cache.require({"a.ppm", "b.ppm", "c.ppm"}),
                       doctest::Contains("b.ppm"), MissingInputError);
}
