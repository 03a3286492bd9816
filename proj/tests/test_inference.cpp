#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>

#include "dds/inference.hpp"
#include "dds/rng.hpp"

using namespace dds;

namespace {

PredictionSet simple_set() {
  PredictionSet p;
  p.sB = {{0.3, 0.3, 0.2, 0.2}, {0.7, 0.7, 0.2, 0.2}};
  p.oB = {{0.4, 0.4, 0.2, 0.2}, {0.6, 0.6, 0.2, 0.2}};
  p.rB = {{0.35, 0.35, 0.3, 0.3}, {0.65, 0.65, 0.3, 0.3}};
  p.sP = Mat(2, 4);  // 3 real classes + phi
  p.sP << 0.8, 0.1, 0.05, 0.05, 0.1, 0.5, 0.2, 0.2;
  p.oP = Mat(2, 4);
  p.oP << 0.1, 0.7, 0.1, 0.1, 0.2, 0.1, 0.5, 0.2;
  p.rP = Mat(2, 2);
  p.rP << 0.3, 0.9, 0.6, 0.1;
  return p;
}

}  // namespace

TEST_CASE("compose_triplets builds n_q * n_rel candidates with fused scores") {
  PredictionSet p = simple_set();
  InferenceConfig cfg;
  auto cands = compose_triplets(p, 5, cfg);
  REQUIRE(cands.size() == 4);

  // query 0: sub argmax 0 (0.8), obj argmax 1 (0.7)
  CHECK(cands[0].subject_label == 0);
  CHECK(cands[0].object_label == 1);
  CHECK(cands[0].relation_label == 0);
  CHECK(cands[0].score == doctest::Approx(0.3 * 0.8 * 0.7));
  CHECK(cands[1].score == doctest::Approx(0.9 * 0.8 * 0.7));
  CHECK(cands[0].frame_index == 5);

  // hand-checkable product: 0.8 * 0.5 * 0.6 would be query1-rel0 with
  // sub 0.5, obj 0.5: actually sub argmax = 1 (0.5), obj argmax = 2 (0.5)
  CHECK(cands[2].subject_label == 1);
  CHECK(cands[2].object_label == 2);
  CHECK(cands[2].score == doctest::Approx(0.6 * 0.5 * 0.5));
}

TEST_CASE("score fusion examples") {
  PredictionSet p = simple_set();
  // all-zero relation probabilities zero every score
  p.rP.setZero();
  auto cands = compose_triplets(p, 0, {});
  for (const auto& c : cands) CHECK(c.score == 0.0);

  // certain subject and object leave the relation probability untouched
  p = simple_set();
  p.sP.setZero();
  p.sP(0, 2) = 1.0;
  p.oP.setZero();
  p.oP(0, 0) = 1.0;
  p.rP(0, 0) = 0.3;
  p.rP(0, 1) = 0.9;
  cands = compose_triplets(p, 0, {});
  CHECK(cands[0].score == doctest::Approx(0.3));
  CHECK(cands[1].score == doctest::Approx(0.9));

  // product case: 0.8 * 0.5 * 0.6 = 0.24
  PredictionSet q = simple_set();
  q.sP.row(0) << 0.8, 0.1, 0.05, 0.05;
  q.oP.row(0) << 0.5, 0.3, 0.1, 0.1;
  q.rP.row(0) << 0.6, 0.0;
  cands = compose_triplets(q, 0, {});
  CHECK(cands[0].score == doctest::Approx(0.8 * 0.5 * 0.6));
}

TEST_CASE("the no-triplet class never becomes a label") {
  PredictionSet p = simple_set();
  // put almost all mass on phi; argmax over real classes must still pick a
  // real label with its (small) probability
  p.sP.row(0) << 0.01, 0.02, 0.03, 0.94;
  auto cands = compose_triplets(p, 0, {});
  CHECK(cands[0].subject_label == 2);
  CHECK(cands[0].score == doctest::Approx(p.rP(0, 0) * 0.03 * 0.7));
}

TEST_CASE("subject_fixed pins the subject and its factor") {
  PredictionSet p = simple_set();
  double nan = std::numeric_limits<double>::quiet_NaN();
  p.sP.setConstant(nan);  // must not be read
  InferenceConfig cfg;
  cfg.subject_fixed = true;
  cfg.fixed_subject_label = 0;
  auto cands = compose_triplets(p, 0, cfg);
  for (const auto& c : cands) {
    CHECK(c.subject_label == 0);
    CHECK(std::isfinite(c.score));
  }
  CHECK(cands[0].score == doctest::Approx(0.3 * 0.7));
}

TEST_CASE("predicted relation regions are never read during inference") {
  PredictionSet p = simple_set();
  double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto& b : p.rB) b = {nan, nan, nan, nan};
  auto cands = compose_triplets(p, 0, {});
  for (const auto& c : cands) {
    CHECK(std::isfinite(c.score));
    CHECK(is_valid(c.subject_box));
    CHECK(is_valid(c.object_box));
  }
}

TEST_CASE("scores are bounded by each factor and monotone in each factor") {
  Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    PredictionSet p = simple_set();
    p.rP(0, 0) = rng.uniform(0.0, 1.0);
    double s_max = p.sP.row(0).head(3).maxCoeff();
    double o_max = p.oP.row(0).head(3).maxCoeff();
    auto cands = compose_triplets(p, 0, {});
    CHECK(cands[0].score <= p.rP(0, 0) + 1e-15);
    CHECK(cands[0].score <= s_max + 1e-15);
    CHECK(cands[0].score <= o_max + 1e-15);

    double before = cands[0].score;
    double bump = rng.uniform(0.0, 1.0 - p.rP(0, 0));
    p.rP(0, 0) += bump;
    auto cands2 = compose_triplets(p, 0, {});
    CHECK(cands2[0].score >= before - 1e-15);
  }
}

TEST_CASE("top_k ordering and ties") {
  std::vector<TripletPrediction> cands;
  auto mk = [](double score, int q, int r) {
    TripletPrediction t;
    t.score = score;
    t.query_index = q;
    t.relation_label = r;
    return t;
  };
  cands.push_back(mk(0.5, 3, 1));
  cands.push_back(mk(0.9, 1, 0));
  cands.push_back(mk(0.5, 2, 1));
  cands.push_back(mk(0.5, 2, 0));

  auto top = top_k(cands, 10);  // k beyond count: all, sorted
  REQUIRE(top.size() == 4);
  CHECK(top[0].score == 0.9);
  // tie block ordered by (query, relation)
  CHECK(top[1].query_index == 2);
  CHECK(top[1].relation_label == 0);
  CHECK(top[2].query_index == 2);
  CHECK(top[2].relation_label == 1);
  CHECK(top[3].query_index == 3);

  auto top2 = top_k(cands, 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0].score == 0.9);

  CHECK_THROWS_AS(top_k(cands, 0), std::invalid_argument);
}
