#include "dds/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dds {

void validate_box(const Box& b, const char* what) {
  if (!(b.w > 0.0) || !(b.h > 0.0)) {
    throw std::invalid_argument(std::string(what) + ": degenerate box (w or h <= 0)");
  }
  if (!std::isfinite(b.cx) || !std::isfinite(b.cy) || !std::isfinite(b.w) ||
      !std::isfinite(b.h)) {
    throw std::invalid_argument(std::string(what) + ": non-finite box");
  }
}

namespace {

double intersection_area(const Corners& a, const Corners& b) {
  double iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1);
  double ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

}  // namespace

double iou(const Box& a, const Box& b) {
  validate_box(a, "iou");
  validate_box(b, "iou");
  double inter = intersection_area(corners(a), corners(b));
  double uni = area(a) + area(b) - inter;
  return inter / uni;
}

double giou(const Box& a, const Box& b) {
  validate_box(a, "giou");
  validate_box(b, "giou");
  Corners ca = corners(a), cb = corners(b);
  double inter = intersection_area(ca, cb);
  double uni = area(a) + area(b) - inter;
  double cw = std::max(ca.x2, cb.x2) - std::min(ca.x1, cb.x1);
  double ch = std::max(ca.y2, cb.y2) - std::min(ca.y1, cb.y1);
  double enclose = cw * ch;
  return inter / uni - (enclose - uni) / enclose;
}

Box union_box(const Box& a, const Box& b) {
  validate_box(a, "union_box");
  validate_box(b, "union_box");
  Corners ca = corners(a), cb = corners(b);
  return box_from_corners(std::min(ca.x1, cb.x1), std::min(ca.y1, cb.y1),
                          std::max(ca.x2, cb.x2), std::max(ca.y2, cb.y2));
}

bool contains(const Box& outer, const Box& inner) {
  // tolerate one center<->corner round trip of rounding
  constexpr double kEps = 1e-12;
  Corners co = corners(outer), ci = corners(inner);
  return co.x1 <= ci.x1 + kEps && co.y1 <= ci.y1 + kEps && co.x2 >= ci.x2 - kEps &&
         co.y2 >= ci.y2 - kEps;
}

Box relation_region(const Box& sub, const Box& obj, RelationRegionMode mode,
                    double theta) {
  if (mode == RelationRegionMode::kUnion) {
    return union_box(sub, obj);
  }
  if (!(theta >= 0.0 && theta < 1.0)) {
    throw std::invalid_argument("relation_region: theta must lie in [0, 1)");
  }
  if (iou(sub, obj) > theta) {
    Corners cs = corners(sub), co = corners(obj);
    // iou > theta >= 0 implies a positive-area intersection
    return box_from_corners(std::max(cs.x1, co.x1), std::max(cs.y1, co.y1),
                            std::min(cs.x2, co.x2), std::min(cs.y2, co.y2));
  }
  return union_box(sub, obj);
}

Box clamp_unit(const Box& b) {
  Corners c = corners(b);
  double x1 = std::clamp(c.x1, 0.0, 1.0);
  double y1 = std::clamp(c.y1, 0.0, 1.0);
  double x2 = std::clamp(c.x2, 0.0, 1.0);
  double y2 = std::clamp(c.y2, 0.0, 1.0);
  return box_from_corners(x1, y1, x2, y2);
}

RelationRegionMode relation_region_mode_from_string(const std::string& s) {
  if (s == "union") return RelationRegionMode::kUnion;
  if (s == "mixture") return RelationRegionMode::kMixture;
  throw std::invalid_argument("unknown relation region mode: " + s);
}

std::string to_string(RelationRegionMode mode) {
  return mode == RelationRegionMode::kUnion ? "union" : "mixture";
}

}  // namespace dds
