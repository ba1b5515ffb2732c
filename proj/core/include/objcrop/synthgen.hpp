#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "objcrop/image.hpp"
#include "objcrop/manifest.hpp"

namespace objcrop {

/// Textured-background parameters (seeded value noise, grayscale).
struct BgConfig {
  int cell = 16;            // lattice cell size in pixels
  double base = 110.0;      // mean gray level
  double amplitude = 90.0;  // peak-to-peak variation
};

struct SynthConfig {
  int n_images = 1000;
  int img_side = 128;
  int objects_lo = 2;   // objects per image, inclusive range
  int objects_hi = 12;
  int n_classes = 32;   // 8 shapes x 4 colors
  double obj_scale_lo = 0.05;  // object side as a fraction of img_side
  double obj_scale_hi = 0.20;
  double longtail_exponent = 0.0;  // class frequency ~ rank^-exponent
  int min_distinct_classes = 2;
  bool allow_overlap = false;
  BgConfig bg;
  std::uint64_t seed = 1;
  double train_frac = 0.8;  // used by the pipeline to split the manifest

  void validate() const;
};

struct GenerationReport {
  int n_images = 0;
  std::int64_t n_objects = 0;
  std::int64_t dropped_objects = 0;
  int images_below_min_distinct = 0;  // due to placement drops
  std::vector<std::int64_t> class_histogram;
};

/// Renders image #index of the dataset: filled anti-aliased shapes
/// (class = shape x color) on a seeded value-noise background. Ground-truth
/// box = tight bounding box of the drawn shape (pixels with coverage >= 0.5).
/// `dropped` counts objects lost to placement rejection.
ImageRGB synth_render(const SynthConfig& cfg, std::uint64_t index,
                      std::vector<GtObject>* objects = nullptr, int* dropped = nullptr);

/// Writes <out_dir>/images/img_NNNNNN.ppm and <out_dir>/manifest.jsonl.
/// Byte-identical output for equal (cfg, seed).
GenerationReport synth_generate(const SynthConfig& cfg, const std::filesystem::path& out_dir);

void report_write(const GenerationReport& r, const std::filesystem::path& path);

}  // namespace objcrop
