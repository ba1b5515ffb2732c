#include "objcrop/box.hpp"

#include <algorithm>

namespace objcrop {

std::optional<BBox> intersect(const BBox& a, const BBox& b) {
  const int x0 = std::max(a.x, b.x);
  const int y0 = std::max(a.y, b.y);
  const int x1 = std::min(a.right(), b.right());
  const int y1 = std::min(a.bottom(), b.bottom());
  if (x1 <= x0 || y1 <= y0) return std::nullopt;
  return BBox{x0, y0, x1 - x0, y1 - y0};
}

double iou(const BBox& a, const BBox& b) {
  const auto inter = intersect(a, b);
  if (!inter) return 0.0;
  const double ia = static_cast<double>(inter->area());
  const double ua = static_cast<double>(a.area()) + static_cast<double>(b.area()) - ia;
  return ia / ua;
}

std::optional<BBox> clip(const BBox& b, int img_w, int img_h) {
  return intersect(b, BBox{0, 0, img_w, img_h});
}

}  // namespace objcrop
