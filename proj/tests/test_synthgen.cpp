#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "objcrop/errors.hpp"
#include "objcrop/manifest.hpp"
#include "objcrop/synthgen.hpp"

using namespace objcrop;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* tag) {
  const fs::path p = fs::temp_directory_path() / (std::string("objcrop_synth_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("n_images=0 gives an empty manifest and no images") {
  const fs::path dir = temp_dir("empty");
  SynthConfig cfg;
  cfg.n_images = 0;
  const GenerationReport rep = synth_generate(cfg, dir);
  CHECK(rep.n_objects == 0);
  const DatasetManifest m = manifest_read(dir / "manifest.jsonl");
  CHECK(m.entries.empty());
  CHECK(fs::is_empty(dir / "images"));
}

TEST_CASE("generation is byte-identical for equal config and seed") {
  SynthConfig cfg;
  cfg.n_images = 12;
  cfg.img_side = 64;
  cfg.objects_lo = 2;
  cfg.objects_hi = 5;
  cfg.seed = 9;
  const fs::path a = temp_dir("det_a"), b = temp_dir("det_b");
  synth_generate(cfg, a);
  synth_generate(cfg, b);
  CHECK(read_bytes(a / "manifest.jsonl") == read_bytes(b / "manifest.jsonl"));
  for (const auto& e : manifest_read(a / "manifest.jsonl").entries)
    CHECK(read_bytes(a / e.image) == read_bytes(b / e.image));
}

TEST_CASE("manifest boxes lie inside their images with positive area") {
  const fs::path dir = temp_dir("boxes");
  SynthConfig cfg;
  cfg.n_images = 40;
  cfg.seed = 3;
  synth_generate(cfg, dir);
  const DatasetManifest m = manifest_read(dir / "manifest.jsonl");
  REQUIRE(!m.entries.empty());
  for (const auto& e : m.entries) {
    for (const auto& o : e.objects) {
      CHECK(o.box.x >= 0);
      CHECK(o.box.y >= 0);
      CHECK(o.box.right() <= e.width);
      CHECK(o.box.bottom() <= e.height);
      CHECK(o.box.area() >= 1);
      CHECK(o.class_id >= 0);
      CHECK(o.class_id < cfg.n_classes);
    }
  }
}

TEST_CASE("images satisfy the distinct-class rule unless drops fired") {
  const fs::path dir = temp_dir("distinct");
  SynthConfig cfg;
  cfg.n_images = 60;
  cfg.seed = 5;
  const GenerationReport rep = synth_generate(cfg, dir);
  const DatasetManifest m = manifest_read(dir / "manifest.jsonl");
  int below = 0;
  for (const auto& e : m.entries) {
    std::vector<int> distinct;
    for (const auto& o : e.objects) distinct.push_back(o.class_id);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    if (static_cast<int>(distinct.size()) < cfg.min_distinct_classes) ++below;
  }
  CHECK(below == rep.images_below_min_distinct);
  // Drops are the only allowed cause.
  if (rep.dropped_objects == 0) CHECK(below == 0);
}

TEST_CASE("mean object area fraction lies within the scale-squared bounds") {
  const fs::path dir = temp_dir("scale");
  SynthConfig cfg;
  cfg.n_images = 80;
  cfg.seed = 6;
  synth_generate(cfg, dir);
  const DatasetManifest m = manifest_read(dir / "manifest.jsonl");
  double sum = 0;
  std::int64_t n = 0;
  for (const auto& e : m.entries)
    for (const auto& o : e.objects) {
      sum += static_cast<double>(o.box.area()) / (e.width * e.height);
      ++n;
    }
  const double mean = sum / static_cast<double>(n);
  CHECK(mean >= cfg.obj_scale_lo * cfg.obj_scale_lo);
  CHECK(mean <= cfg.obj_scale_hi * cfg.obj_scale_hi);
}

TEST_CASE("longtail exponent 1 matches 1/rank frequencies on the top ranks") {
  const fs::path dir = temp_dir("longtail");
  SynthConfig cfg;
  cfg.n_images = 10000;
  cfg.img_side = 48;
  cfg.objects_lo = 2;
  cfg.objects_hi = 4;
  cfg.obj_scale_lo = 0.10;
  cfg.obj_scale_hi = 0.25;
  cfg.n_classes = 32;
  cfg.longtail_exponent = 1.0;
  cfg.seed = 8;
  const GenerationReport rep = synth_generate(cfg, dir);
  const double total = static_cast<double>(rep.n_objects);
  // Normalizer of the truncated zipf law over 32 classes.
  double hsum = 0;
  for (int r = 1; r <= 32; ++r) hsum += 1.0 / r;
  for (int rank = 1; rank <= 10; ++rank) {
    const double expected = (1.0 / rank) / hsum;
    const double observed = rep.class_histogram[rank - 1] / total;
    CHECK(observed == doctest::Approx(expected).epsilon(0.10));
  }
}

TEST_CASE("split is disjoint, exhaustive, deterministic, floor-sized") {
  DatasetManifest m;
  m.root = ".";
  for (int i = 0; i < 10; ++i)
    m.entries.push_back({"img_" + std::to_string(i) + ".ppm", 8, 8, {}});

  const auto [train, val] = manifest_split(m, 0.9999, 42);
  CHECK(train.entries.size() == 9);
  CHECK(val.entries.size() == 1);

  const auto [t2, v2] = manifest_split(m, 0.7, 11);
  CHECK(t2.entries.size() == 7);
  CHECK(t2.entries.size() + v2.entries.size() == m.entries.size());
  std::vector<std::string> all;
  for (const auto& e : t2.entries) all.push_back(e.image);
  for (const auto& e : v2.entries) all.push_back(e.image);
  std::sort(all.begin(), all.end());
  CHECK(std::unique(all.begin(), all.end()) == all.end());

  const auto [t3, v3] = manifest_split(m, 0.7, 11);
  CHECK(t3.entries == t2.entries);

  CHECK_THROWS_AS(manifest_split(m, 1.5, 1), ConfigError);
}

TEST_CASE("invalid configs are rejected") {
  SynthConfig cfg;
  cfg.min_distinct_classes = 5;
  cfg.objects_lo = 2;  // fewer objects than required distinct classes
  CHECK_THROWS_AS(cfg.validate(), ConfigError);

  SynthConfig cfg2;
  cfg2.n_classes = 99;
  CHECK_THROWS_AS(cfg2.validate(), ConfigError);
}
