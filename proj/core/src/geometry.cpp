#include "partloc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "partloc/error.hpp"

namespace partloc {

BBox::BBox(double x_min, double y_min, double x_max, double y_max)
    : x_min_(x_min), y_min_(y_min), x_max_(x_max), y_max_(y_max) {
  if (!std::isfinite(x_min) || !std::isfinite(y_min) || !std::isfinite(x_max) ||
      !std::isfinite(y_max)) {
    throw InvalidArgument("bbox: non-finite coordinate");
  }
  if (!(x_min < x_max) || !(y_min < y_max)) {
    throw InvalidArgument("bbox: empty box");
  }
}

BBox box_from_xywh(double x, double y, double w, double h) { return BBox(x, y, x + w, y + h); }

double intersection_area(const BBox& a, const BBox& b) noexcept {
  const double iw = std::min(a.x_max(), b.x_max()) - std::max(a.x_min(), b.x_min());
  const double ih = std::min(a.y_max(), b.y_max()) - std::max(a.y_min(), b.y_min());
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const BBox& a, const BBox& b) noexcept {
  if (a == b) return 1.0;
  const double inter = intersection_area(a, b);
  if (inter == 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return std::clamp(inter / uni, 0.0, 1.0);
}

bool contains_within_slack(const BBox& outer, const BBox& inner, double epsilon) {
  if (!(epsilon >= 0.0)) throw InvalidArgument("contains_within_slack: epsilon must be >= 0");
  return outer.x_min() - inner.x_min() <= epsilon && outer.y_min() - inner.y_min() <= epsilon &&
         inner.x_max() - outer.x_max() <= epsilon && inner.y_max() - outer.y_max() <= epsilon;
}

std::vector<ScoredBox> nms(std::span<const ScoredBox> boxes, double iou_threshold) {
  if (!(iou_threshold >= 0.0 && iou_threshold <= 1.0)) {
    throw InvalidArgument("nms: iou_threshold must lie in [0, 1]");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), 0);
  // Stable so equal scores keep input order.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return boxes[a].score > boxes[b].score; });

  std::vector<ScoredBox> kept;
  for (std::size_t idx : order) {
    const ScoredBox& cand = boxes[idx];
    const bool suppressed = std::any_of(kept.begin(), kept.end(), [&](const ScoredBox& k) {
      return iou(k.box, cand.box) > iou_threshold;
    });
    if (!suppressed) kept.push_back(cand);
  }
  return kept;
}

BBox clip_to_image(const BBox& box, double width, double height) {
  return BBox(std::max(box.x_min(), 0.0), std::max(box.y_min(), 0.0), std::min(box.x_max(), width),
              std::min(box.y_max(), height));
}

bool intersects_image(const BBox& box, double width, double height) noexcept {
  return box.x_max() > 0.0 && box.y_max() > 0.0 && box.x_min() < width && box.y_min() < height;
}

}  // namespace partloc
