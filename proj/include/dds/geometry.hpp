#pragma once

#include <stdexcept>
#include <string>

namespace dds {

// Axis-aligned box in center form, all coordinates normalized to the frame.
// Center form is canonical because the regression heads emit it; corner form
// is a derived view.
struct Box {
  double cx = 0.0;
  double cy = 0.0;
  double w = 0.0;
  double h = 0.0;
};

struct Corners {
  double x1, y1, x2, y2;
};

inline Corners corners(const Box& b) {
  return {b.cx - b.w / 2.0, b.cy - b.h / 2.0, b.cx + b.w / 2.0, b.cy + b.h / 2.0};
}

inline Box box_from_corners(double x1, double y1, double x2, double y2) {
  return {(x1 + x2) / 2.0, (y1 + y2) / 2.0, x2 - x1, y2 - y1};
}

inline double area(const Box& b) { return b.w * b.h; }

inline bool is_valid(const Box& b) {
  return b.cx >= 0.0 && b.cx <= 1.0 && b.cy >= 0.0 && b.cy <= 1.0 && b.w > 0.0 &&
         b.w <= 1.0 && b.h > 0.0 && b.h <= 1.0;
}

void validate_box(const Box& b, const char* what);

double iou(const Box& a, const Box& b);

// Intersection over union minus the enclosing-box slack, range (-1, 1].
double giou(const Box& a, const Box& b);

// Smallest axis-aligned box containing both inputs.
Box union_box(const Box& a, const Box& b);

// Whether `outer` contains `inner` (corner inequalities, non-strict).
bool contains(const Box& outer, const Box& inner);

enum class RelationRegionMode { kUnion, kMixture };

// Ground-truth relation region for a subject/object pair. Union mode returns
// the union box; mixture mode returns the intersection box when iou > theta
// and the union box otherwise.
Box relation_region(const Box& sub, const Box& obj, RelationRegionMode mode,
                    double theta);

// Clamp the corner form to [0,1] and convert back. Keeps positive extent as
// long as the center lies inside the frame.
Box clamp_unit(const Box& b);

RelationRegionMode relation_region_mode_from_string(const std::string& s);
std::string to_string(RelationRegionMode mode);

}  // namespace dds
