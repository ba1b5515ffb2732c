#pragma once

#include <cstdint>
#include <optional>

namespace objcrop {

/// Axis-aligned pixel rectangle. Integer coordinates, exclusive right/bottom
/// edge: the box covers columns [x, x+w) and rows [y, y+h).
struct BBox {
  int x = 0;
  int y = 0;
  int w = 0;
  int h = 0;

  std::int64_t area() const {
    return static_cast<std::int64_t>(w) * static_cast<std::int64_t>(h);
  }
  int right() const { return x + w; }
  int bottom() const { return y + h; }
  double cx() const { return x + 0.5 * w; }
  double cy() const { return y + 0.5 * h; }

  bool operator==(const BBox&) const = default;
};

/// Intersection, or nullopt when the boxes are disjoint or touch only at an
/// edge/corner (zero area).
std::optional<BBox> intersect(const BBox& a, const BBox& b);

/// Intersection-over-union in [0, 1]; 0 for disjoint boxes.
double iou(const BBox& a, const BBox& b);

/// Clip to image bounds [0,img_w)x[0,img_h); nullopt if nothing remains.
std::optional<BBox> clip(const BBox& b, int img_w, int img_h);

}  // namespace objcrop
