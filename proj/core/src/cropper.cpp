#include "objcrop/cropper.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "objcrop/errors.hpp"

namespace objcrop {

void CropConfig::validate() const {
  if (target < 1) throw ConfigError("crop: target must be >= 1");
  if (!(scale_lo > 0.0 && scale_lo <= scale_hi && scale_hi <= 1.0))
    throw ConfigError("crop: need 0 < scale_lo <= scale_hi <= 1");
  if (!(ratio_lo > 0.0 && ratio_lo <= ratio_hi))
    throw ConfigError("crop: need 0 < ratio_lo <= ratio_hi");
  if (delta < 0.0) throw ConfigError("crop: delta must be >= 0");
  if (!(shift_lo >= 0.0 && shift_lo <= shift_hi))
    throw ConfigError("crop: need 0 <= shift_lo <= shift_hi");
  if (s_min_override && !(*s_min_override > 0.0 && *s_min_override <= 1.0))
    throw ConfigError("crop: s_min_override must be in (0,1]");
  if (!(flip_prob >= 0.0 && flip_prob <= 1.0))
    throw ConfigError("crop: flip_prob must be in [0,1]");
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::SceneScene: return "scene-scene";
    case Strategy::ObjScene: return "obj-scene";
    case Strategy::ObjObjDilate: return "obj-obj-dilate";
    case Strategy::ObjObjShift: return "obj-obj-shift";
    case Strategy::DilateDilate: return "dilate-dilate";
    case Strategy::GtScene: return "gt-scene";
    case Strategy::GtDilate: return "gt-dilate";
  }
  return "?";
}

Strategy strategy_from_name(const std::string& name) {
  for (Strategy s : {Strategy::SceneScene, Strategy::ObjScene, Strategy::ObjObjDilate,
                     Strategy::ObjObjShift, Strategy::DilateDilate, Strategy::GtScene,
                     Strategy::GtDilate})
    if (name == strategy_name(s)) return s;
  throw ConfigError("unknown strategy \"" + name + "\"");
}

bool strategy_needs_proposals(Strategy s) {
  return s == Strategy::ObjScene || s == Strategy::ObjObjDilate ||
         s == Strategy::ObjObjShift || s == Strategy::DilateDilate;
}

bool strategy_needs_gt(Strategy s) {
  return s == Strategy::GtScene || s == Strategy::GtDilate;
}

std::pair<ImageRGB, BBox> random_resized_crop(const ImageRGB& img, const BBox& region,
                                              double scale_lo, double scale_hi,
                                              double ratio_lo, double ratio_hi, int target,
                                              Rng& rng) {
  if (region.w <= 0 || region.h <= 0)
    throw ConfigError("random_resized_crop: degenerate region");
  if (region.x < 0 || region.y < 0 || region.right() > img.width ||
      region.bottom() > img.height)
    throw ConfigError("random_resized_crop: region outside image");

  const double area = static_cast<double>(region.area());
  BBox rect{};
  bool placed = false;
  for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
    const double frac = rng.uniform(scale_lo, scale_hi);
    const double aspect = std::exp(rng.uniform(std::log(ratio_lo), std::log(ratio_hi)));
    const int cw = static_cast<int>(std::llround(std::sqrt(area * frac * aspect)));
    const int ch = static_cast<int>(std::llround(std::sqrt(area * frac / aspect)));
    if (cw < 1 || ch < 1 || cw > region.w || ch > region.h) continue;
    rect.x = region.x + static_cast<int>(rng.uniform_int(0, region.w - cw));
    rect.y = region.y + static_cast<int>(rng.uniform_int(0, region.h - ch));
    rect.w = cw;
    rect.h = ch;
    placed = true;
  }
  if (!placed) {
    // Largest center crop honoring the ratio bounds.
    const double region_aspect = static_cast<double>(region.w) / region.h;
    int cw = region.w, ch = region.h;
    if (region_aspect > ratio_hi)
      cw = std::max(1, static_cast<int>(std::llround(region.h * ratio_hi)));
    else if (region_aspect < ratio_lo)
      ch = std::max(1, static_cast<int>(std::llround(region.w / ratio_lo)));
    cw = std::min(cw, region.w);
    ch = std::min(ch, region.h);
    rect = {region.x + (region.w - cw) / 2, region.y + (region.h - ch) / 2, cw, ch};
  }
  return {resize_bilinear(crop(img, rect), target, target), rect};
}

BBox dilate_box(const BBox& box, double delta, int img_w, int img_h) {
  const double dx = delta * img_w / 2.0;
  const double dy = delta * img_h / 2.0;
  // Truncate toward the interior so the result never exceeds the real-valued
  // dilation, then clip to the image.
  int x0 = static_cast<int>(std::ceil(box.x - dx));
  int y0 = static_cast<int>(std::ceil(box.y - dy));
  int x1 = static_cast<int>(std::floor(box.right() + dx));
  int y1 = static_cast<int>(std::floor(box.bottom() + dy));
  x0 = std::max(x0, 0);
  y0 = std::max(y0, 0);
  x1 = std::min(x1, img_w);
  y1 = std::min(y1, img_h);
  return BBox{x0, y0, x1 - x0, y1 - y0};
}

BBox shift_box(const BBox& box, double shift_lo, double shift_hi, Rng& rng, int img_w,
               int img_h) {
  const double d = rng.uniform(shift_lo, shift_hi);
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  int nx = static_cast<int>(std::llround(box.x + d * std::cos(theta)));
  int ny = static_cast<int>(std::llround(box.y + d * std::sin(theta)));
  nx = std::clamp(nx, 0, img_w - box.w);
  ny = std::clamp(ny, 0, img_h - box.h);
  return BBox{nx, ny, box.w, box.h};
}

BBox min_size_recenter(const BBox& box, int min_side, int img_w, int img_h) {
  if (min_side > std::min(img_w, img_h))
    throw ConfigError("min_size_recenter: min_side larger than image");
  if (box.w >= min_side && box.h >= min_side) return box;
  int x = static_cast<int>(std::llround(box.cx() - min_side / 2.0));
  int y = static_cast<int>(std::llround(box.cy() - min_side / 2.0));
  x = std::clamp(x, 0, img_w - min_side);
  y = std::clamp(y, 0, img_h - min_side);
  return BBox{x, y, min_side, min_side};
}

double compute_smin(const ProposalCache& cache, const DatasetManifest& manifest,
                    double scale_lo) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : manifest.entries) {
    if (!cache.contains(e.image)) continue;
    const double img_area = static_cast<double>(e.width) * e.height;
    for (const auto& p : cache.at(e.image)) {
      sum += static_cast<double>(p.box.area()) / img_area;
      ++n;
    }
  }
  if (n == 0) throw MissingInputError("compute_smin: proposal cache is empty");
  const double avg = sum / static_cast<double>(n);
  return std::clamp(scale_lo / avg, scale_lo, 1.0);
}

double compute_smin_gt(const DatasetManifest& manifest, double scale_lo) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& e : manifest.entries) {
    const double img_area = static_cast<double>(e.width) * e.height;
    for (const auto& o : e.objects) {
      sum += static_cast<double>(o.box.area()) / img_area;
      ++n;
    }
  }
  if (n == 0) throw MissingInputError("compute_smin: manifest has no ground-truth boxes");
  const double avg = sum / static_cast<double>(n);
  return std::clamp(scale_lo / avg, scale_lo, 1.0);
}

namespace {

ImageRGB maybe_flip(ImageRGB view, const CropConfig& cfg, Rng& rng) {
  if (rng.bernoulli(cfg.flip_prob)) return flip_horizontal(view);
  return view;
}

}  // namespace

ViewPair sample_pair(const ImageRGB& img, const std::vector<BBox>& boxes, Strategy strategy,
                     const CropConfig& cfg, double s_min, Rng& rng) {
  cfg.validate();
  const BBox whole{0, 0, img.width, img.height};
  const bool needs_boxes = strategy != Strategy::SceneScene;
  if (needs_boxes && boxes.empty())
    throw MissingInputError(std::string("sample_pair: strategy ") + strategy_name(strategy) +
                            " requires a non-empty box source");

  ViewPair out;
  BBox chosen{};
  if (needs_boxes) {
    chosen = boxes[static_cast<std::size_t>(
        rng.uniform_int(0, static_cast<std::int64_t>(boxes.size()) - 1))];
    out.proposal_used = chosen;
  }

  auto rrc_scene = [&](Rng& r) {
    return random_resized_crop(img, whole, cfg.scale_lo, cfg.scale_hi, cfg.ratio_lo,
                               cfg.ratio_hi, cfg.target, r);
  };
  auto rrc_box = [&](const BBox& region, Rng& r) {
    return random_resized_crop(img, region, s_min, 1.0, cfg.ratio_lo, cfg.ratio_hi,
                               cfg.target, r);
  };

  // Draw order: box pick, shift draws (if any), view_a (+flip), view_b (+flip).
  switch (strategy) {
    case Strategy::SceneScene: {
      auto [va, ra] = rrc_scene(rng);
      out.view_a = maybe_flip(std::move(va), cfg, rng);
      auto [vb, rb] = rrc_scene(rng);
      out.view_b = maybe_flip(std::move(vb), cfg, rng);
      out.src_a = ra;
      out.src_b = rb;
      out.role_a = ViewRole::Context;
      out.role_b = ViewRole::Context;
      break;
    }
    case Strategy::ObjScene:
    case Strategy::GtScene: {
      const BBox p = min_size_recenter(chosen, cfg.effective_min_side(), img.width, img.height);
      auto [va, ra] = rrc_box(p, rng);
      out.view_a = maybe_flip(std::move(va), cfg, rng);
      auto [vb, rb] = rrc_scene(rng);
      out.view_b = maybe_flip(std::move(vb), cfg, rng);
      out.src_a = ra;
      out.src_b = rb;
      out.role_a = ViewRole::Object;
      out.role_b = ViewRole::Context;
      break;
    }
    case Strategy::ObjObjDilate:
    case Strategy::GtDilate: {
      const BBox p = min_size_recenter(chosen, cfg.effective_min_side(), img.width, img.height);
      const BBox d = dilate_box(p, cfg.delta, img.width, img.height);
      auto [va, ra] = rrc_box(p, rng);
      out.view_a = maybe_flip(std::move(va), cfg, rng);
      auto [vb, rb] = rrc_box(d, rng);
      out.view_b = maybe_flip(std::move(vb), cfg, rng);
      out.src_a = ra;
      out.src_b = rb;
      out.role_a = ViewRole::Object;
      out.role_b = ViewRole::Context;
      break;
    }
    case Strategy::ObjObjShift: {
      const BBox p = min_size_recenter(chosen, cfg.effective_min_side(), img.width, img.height);
      const BBox s = shift_box(p, cfg.shift_lo, cfg.shift_hi, rng, img.width, img.height);
      auto [va, ra] = rrc_box(p, rng);
      out.view_a = maybe_flip(std::move(va), cfg, rng);
      auto [vb, rb] = rrc_box(s, rng);
      out.view_b = maybe_flip(std::move(vb), cfg, rng);
      out.src_a = ra;
      out.src_b = rb;
      out.role_a = ViewRole::Object;
      out.role_b = ViewRole::Object;
      break;
    }
    case Strategy::DilateDilate: {
      const BBox p = min_size_recenter(chosen, cfg.effective_min_side(), img.width, img.height);
      const BBox d = dilate_box(p, cfg.delta, img.width, img.height);
      auto [va, ra] = rrc_box(d, rng);
      out.view_a = maybe_flip(std::move(va), cfg, rng);
      auto [vb, rb] = rrc_box(d, rng);
      out.view_b = maybe_flip(std::move(vb), cfg, rng);
      out.src_a = ra;
      out.src_b = rb;
      out.role_a = ViewRole::Context;
      out.role_b = ViewRole::Context;
      break;
    }
  }
  return out;
}

}  // namespace objcrop
