#pragma once

#include <optional>
#include <string>
#include <vector>

#include "objcrop/image.hpp"
#include "objcrop/manifest.hpp"
#include "objcrop/objectness.hpp"
#include "objcrop/rng.hpp"

namespace objcrop {

struct CropConfig {
  int target = 64;           // square view side
  double scale_lo = 0.2;     // scene-crop area fraction range
  double scale_hi = 1.0;
  double ratio_lo = 0.75;    // aspect-ratio range (log-uniform)
  double ratio_hi = 4.0 / 3.0;
  double delta = 0.1;        // box dilation as a fraction of image size
  double shift_lo = 80.0;    // shifted-box center displacement range, pixels
  double shift_hi = 100.0;
  std::optional<double> s_min_override;  // per-run override of the computed s_min
  int min_crop_side = 0;     // 0 = use target
  double flip_prob = 0.5;    // horizontal flip per view

  int effective_min_side() const { return min_crop_side > 0 ? min_crop_side : target; }
  void validate() const;
};

/// View-pairing strategies. The first five follow the proposal-driven
/// variants; Gt* swap the proposal source for ground-truth boxes.
enum class Strategy {
  SceneScene,
  ObjScene,
  ObjObjDilate,
  ObjObjShift,
  DilateDilate,
  GtScene,
  GtDilate,
};

const char* strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);
bool strategy_needs_proposals(Strategy s);
bool strategy_needs_gt(Strategy s);

/// Which projection head a view feeds.
enum class ViewRole { Object, Context };

struct ViewPair {
  ImageRGB view_a;
  ImageRGB view_b;
  ViewRole role_a = ViewRole::Context;
  ViewRole role_b = ViewRole::Context;
  BBox src_a;  // final crop rectangle in original image coordinates
  BBox src_b;
  std::optional<BBox> proposal_used;
};

/// Random resized crop inside `region`: up to 10 attempts sampling an area
/// fraction in [scale_lo, scale_hi] and a log-uniform aspect ratio in
/// [ratio_lo, ratio_hi]; a fitting rectangle is placed uniformly at random,
/// otherwise the largest center crop honoring the ratio bounds is used. The
/// crop is resized to target x target.
/// Draw order per attempt: area fraction, aspect, then (on success) x, y.
std::pair<ImageRGB, BBox> random_resized_crop(const ImageRGB& img, const BBox& region,
                                              double scale_lo, double scale_hi,
                                              double ratio_lo, double ratio_hi, int target,
                                              Rng& rng);

/// Symmetric dilation by delta * image size, split half per side, clipped to
/// the image with truncation toward the interior.
BBox dilate_box(const BBox& box, double delta, int img_w, int img_h);

/// Displaces the box center by a uniform distance in [shift_lo, shift_hi] at
/// a uniform angle, then translates back inside the image (size preserved).
BBox shift_box(const BBox& box, double shift_lo, double shift_hi, Rng& rng, int img_w,
               int img_h);

/// Boxes smaller than min_side in either dimension are replaced by a
/// min_side x min_side box centered on the original center, translated (not
/// shrunk) to fit inside the image.
BBox min_size_recenter(const BBox& box, int min_side, int img_w, int img_h);

/// Dataset-level lower crop bound for box-relative crops:
/// clamp(scale_lo / mean proposal-area fraction, scale_lo, 1). Image areas
/// come from the manifest.
double compute_smin(const ProposalCache& cache, const DatasetManifest& manifest,
                    double scale_lo = 0.2);

/// Same formula over ground-truth boxes, for the Gt* strategies.
double compute_smin_gt(const DatasetManifest& manifest, double scale_lo = 0.2);

/// Emits one view pair for the given strategy. `boxes` is the proposal pool
/// (or ground-truth boxes for Gt* strategies); strategies other than
/// SceneScene require it non-empty.
ViewPair sample_pair(const ImageRGB& img, const std::vector<BBox>& boxes, Strategy strategy,
                     const CropConfig& cfg, double s_min, Rng& rng);

}  // namespace objcrop
