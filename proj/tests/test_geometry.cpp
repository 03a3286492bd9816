#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dds/geometry.hpp"
#include "dds/rng.hpp"

using namespace dds;

namespace {

// Independent corner-arithmetic oracle: everything computed from corner
// coordinates with no shared code with the library path.
struct CornerOracle {
  double ax1, ay1, ax2, ay2;
  double bx1, by1, bx2, by2;

  CornerOracle(const Box& a, const Box& b) {
    ax1 = a.cx - a.w / 2;
    ay1 = a.cy - a.h / 2;
    ax2 = a.cx + a.w / 2;
    ay2 = a.cy + a.h / 2;
    bx1 = b.cx - b.w / 2;
    by1 = b.cy - b.h / 2;
    bx2 = b.cx + b.w / 2;
    by2 = b.cy + b.h / 2;
  }
  double inter() const {
    double iw = std::min(ax2, bx2) - std::max(ax1, bx1);
    double ih = std::min(ay2, by2) - std::max(ay1, by1);
    return (iw > 0 && ih > 0) ? iw * ih : 0.0;
  }
  double uni() const {
    return (ax2 - ax1) * (ay2 - ay1) + (bx2 - bx1) * (by2 - by1) - inter();
  }
  double iou() const { return inter() / uni(); }
  double giou() const {
    double cw = std::max(ax2, bx2) - std::min(ax1, bx1);
    double ch = std::max(ay2, by2) - std::min(ay1, by1);
    double c = cw * ch;
    return iou() - (c - uni()) / c;
  }
};

Box random_box(Rng& rng) {
  double w = rng.uniform(0.05, 0.6);
  double h = rng.uniform(0.05, 0.6);
  double cx = rng.uniform(w / 2, 1.0 - w / 2);
  double cy = rng.uniform(h / 2, 1.0 - h / 2);
  return {cx, cy, w, h};
}

}  // namespace

TEST_CASE("iou basic cases") {
  Box a{0.3, 0.3, 0.2, 0.2};
  CHECK(iou(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  Box left{0.1, 0.5, 0.1, 0.1};
  Box right{0.9, 0.5, 0.1, 0.1};
  CHECK(iou(left, right) == 0.0);

  // frozen from the corner-arithmetic oracle:
  // a corners (0,0,0.5,0.5), b corners (0.25,0.25,0.75,0.75)
  // inter 0.25^2 = 0.0625, union 0.5 - 0.0625 = 0.4375, iou = 1/7
  Box p{0.25, 0.25, 0.5, 0.5};
  Box q{0.5, 0.5, 0.5, 0.5};
  CHECK(iou(p, q) == doctest::Approx(1.0 / 7.0).epsilon(1e-12));
  CHECK(iou(p, q) == doctest::Approx(CornerOracle(p, q).iou()).epsilon(1e-12));
}

TEST_CASE("iou rejects degenerate boxes") {
  Box bad{0.5, 0.5, 0.0, 0.2};
  Box ok{0.5, 0.5, 0.2, 0.2};
  CHECK_THROWS_AS(iou(bad, ok), std::invalid_argument);
  CHECK_THROWS_AS(giou(ok, bad), std::invalid_argument);
}

TEST_CASE("giou basic cases") {
  Box a{0.4, 0.6, 0.3, 0.2};
  CHECK(giou(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  // Touching disjoint halves fill their enclosing box: IoU 0, no slack.
  Box lower{0.5, 0.25, 1.0, 0.5};
  Box upper{0.5, 0.75, 1.0, 0.5};
  CHECK(giou(lower, upper) == doctest::Approx(0.0).epsilon(1e-12));

  // Far-separated small boxes go negative; frozen from the oracle:
  // corners (0,0,0.1,0.1) and (0.9,0.9,1,1): I=0, U=0.02, C=1
  // giou = 0 - 0.98/1 = -0.98
  Box tiny1{0.05, 0.05, 0.1, 0.1};
  Box tiny2{0.95, 0.95, 0.1, 0.1};
  CHECK(giou(tiny1, tiny2) == doctest::Approx(-0.98).epsilon(1e-12));
  CHECK(giou(tiny1, tiny2) ==
        doctest::Approx(CornerOracle(tiny1, tiny2).giou()).epsilon(1e-12));
}

TEST_CASE("union_box") {
  Box outer{0.5, 0.5, 0.8, 0.8};
  Box inner{0.5, 0.5, 0.2, 0.2};
  Box u = union_box(outer, inner);
  CHECK(u.cx == doctest::Approx(outer.cx));
  CHECK(u.w == doctest::Approx(outer.w));

  Box same = union_box(inner, inner);
  CHECK(same.w == doctest::Approx(inner.w));

  // two corner boxes -> enclosing box from corner min/max
  Box tl{0.1, 0.1, 0.2, 0.2};
  Box br{0.9, 0.9, 0.2, 0.2};
  Box enc = union_box(tl, br);
  Corners c = corners(enc);
  CHECK(c.x1 == doctest::Approx(0.0));
  CHECK(c.y1 == doctest::Approx(0.0));
  CHECK(c.x2 == doctest::Approx(1.0));
  CHECK(c.y2 == doctest::Approx(1.0));
}

TEST_CASE("relation_region modes") {
  Box sub{0.4, 0.5, 0.4, 0.4};
  Box obj{0.6, 0.5, 0.4, 0.4};

  Box u = relation_region(sub, obj, RelationRegionMode::kUnion, 0.0);
  Box ub = union_box(sub, obj);
  CHECK(u.cx == doctest::Approx(ub.cx));
  CHECK(u.w == doctest::Approx(ub.w));

  // theta = 0 with overlapping boxes -> intersection box
  Box inter = relation_region(sub, obj, RelationRegionMode::kMixture, 0.0);
  Corners ci = corners(inter);
  CHECK(ci.x1 == doctest::Approx(0.4));
  CHECK(ci.x2 == doctest::Approx(0.6));

  // IoU below theta -> union branch. Oracle: iou = 0.2/0.6 = 1/3 < 0.5
  CHECK(iou(sub, obj) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  Box mix = relation_region(sub, obj, RelationRegionMode::kMixture, 0.5);
  CHECK(mix.w == doctest::Approx(ub.w));

  CHECK_THROWS_AS(relation_region(sub, obj, RelationRegionMode::kMixture, 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(relation_region(sub, obj, RelationRegionMode::kMixture, -0.1),
                  std::invalid_argument);
}

TEST_CASE("geometry property suite over random pairs") {
  Rng rng(20240817);
  int checked = 0;
  for (int i = 0; i < 10000; ++i) {
    Box a = random_box(rng);
    Box b = random_box(rng);
    double i_ab = iou(a, b), i_ba = iou(b, a);
    double g_ab = giou(a, b), g_ba = giou(b, a);
    REQUIRE(std::abs(i_ab - i_ba) < 1e-12);
    REQUIRE(std::abs(g_ab - g_ba) < 1e-12);
    REQUIRE(g_ab <= i_ab + 1e-12);
    REQUIRE(std::abs(giou(a, a) - 1.0) < 1e-12);

    Box u = union_box(a, b);
    REQUIRE(contains(u, a));
    REQUIRE(contains(u, b));
    REQUIRE(area(u) >= std::max(area(a), area(b)) - 1e-12);

    double theta = rng.uniform(0.0, 0.99);
    Box rr = relation_region(a, b, RelationRegionMode::kMixture, theta);
    if (i_ab <= theta) {
      // union branch, exactly
      REQUIRE(std::abs(rr.cx - u.cx) < 1e-12);
      REQUIRE(std::abs(rr.w - u.w) < 1e-12);
    } else {
      REQUIRE(area(rr) <= std::min(area(a), area(b)) + 1e-12);
    }

    // oracle agreement on random pairs
    CornerOracle oracle(a, b);
    REQUIRE(std::abs(i_ab - oracle.iou()) < 1e-12);
    REQUIRE(std::abs(g_ab - oracle.giou()) < 1e-12);
    ++checked;
  }
  CHECK(checked == 10000);
}

TEST_CASE("corner round trip is exact to ulp") {
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    Box b = random_box(rng);
    Corners c = corners(b);
    Box back = box_from_corners(c.x1, c.y1, c.x2, c.y2);
    CHECK(std::abs(back.cx - b.cx) <= 1e-15);
    CHECK(std::abs(back.cy - b.cy) <= 1e-15);
    CHECK(std::abs(back.w - b.w) <= 1e-15);
    CHECK(std::abs(back.h - b.h) <= 1e-15);
  }
}

TEST_CASE("clamp_unit keeps positive extent") {
  Box wide{0.9, 0.5, 0.4, 0.2};
  Box c = clamp_unit(wide);
  Corners cc = corners(c);
  CHECK(cc.x2 <= 1.0);
  CHECK(c.w > 0.0);
  CHECK(is_valid(c));
}
