#pragma once

#include <span>
#include <vector>

namespace partloc {

/// Axis-aligned box in real-valued pixel coordinates, half-open on the max
/// edges. Construction rejects empty or non-finite boxes.
class BBox {
 public:
  BBox(double x_min, double y_min, double x_max, double y_max);

  double x_min() const noexcept { return x_min_; }
  double y_min() const noexcept { return y_min_; }
  double x_max() const noexcept { return x_max_; }
  double y_max() const noexcept { return y_max_; }

  double width() const noexcept { return x_max_ - x_min_; }
  double height() const noexcept { return y_max_ - y_min_; }
  double area() const noexcept { return width() * height(); }
  double center_x() const noexcept { return 0.5 * (x_min_ + x_max_); }
  double center_y() const noexcept { return 0.5 * (y_min_ + y_max_); }

  friend bool operator==(const BBox&, const BBox&) = default;

 private:
  double x_min_, y_min_, x_max_, y_max_;
};

/// Builds a box from x, y, width, height.
BBox box_from_xywh(double x, double y, double w, double h);

double intersection_area(const BBox& a, const BBox& b) noexcept;

/// Intersection over union, in [0, 1].
double iou(const BBox& a, const BBox& b) noexcept;

/// Containment indicator with per-edge slack: true iff no edge of `inner`
/// lies more than `epsilon` pixels outside the matching edge of `outer`.
bool contains_within_slack(const BBox& outer, const BBox& inner, double epsilon);

struct ScoredBox {
  BBox box;
  double score;
};

/// Greedy non-maximum suppression. Output is sorted by descending score (ties
/// keep input order) and no two survivors overlap with IoU above `iou_threshold`.
std::vector<ScoredBox> nms(std::span<const ScoredBox> boxes, double iou_threshold);

/// Intersection of `box` with [0,w)x[0,h). Throws if nothing is left.
BBox clip_to_image(const BBox& box, double width, double height);

bool intersects_image(const BBox& box, double width, double height) noexcept;

}  // namespace partloc
