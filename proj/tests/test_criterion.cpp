#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dds/criterion.hpp"
#include "dds/rng.hpp"

using namespace dds;

namespace {

struct TinyInstance {
  Parameter sB_raw{"sB_raw", Mat()};
  Parameter oB_raw{"oB_raw", Mat()};
  Parameter rB_raw{"rB_raw", Mat()};
  Parameter sP{"sP", Mat()};
  Parameter oP{"oP", Mat()};
  Parameter rP{"rP", Mat()};
  FrameAnnotation gt;
  int n_q, n_obj, n_rel;

  TinyInstance(Rng& rng, int n_q, int n_m, int n_obj, int n_rel)
      : n_q(n_q), n_obj(n_obj), n_rel(n_rel) {
    auto rand = [&](int r, int c) {
      Mat m(r, c);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
      return m;
    };
    sB_raw = Parameter("sB_raw", rand(n_q, 4));
    oB_raw = Parameter("oB_raw", rand(n_q, 4));
    rB_raw = Parameter("rB_raw", rand(n_q, 4));
    sP = Parameter("sP", rand(n_q, n_obj + 1));
    oP = Parameter("oP", rand(n_q, n_obj + 1));
    rP = Parameter("rP", rand(n_q, n_rel));
    for (int j = 0; j < n_m; ++j) {
      Triplet tr;
      tr.subject_box = {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                        rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)};
      tr.object_box = {rng.uniform(0.3, 0.7), rng.uniform(0.3, 0.7),
                       rng.uniform(0.1, 0.4), rng.uniform(0.1, 0.4)};
      tr.subject_label = rng.uniform_int(0, n_obj - 1);
      tr.object_label = rng.uniform_int(0, n_obj - 1);
      tr.relations = {rng.uniform_int(0, n_rel - 1)};
      if (tr.relations[0] != 0) tr.relations.insert(tr.relations.begin(), 0);
      gt.triplets.push_back(tr);
    }
  }

  FrameOutputs outputs(Tape& t) {
    FrameOutputs f;
    f.sB = t.sigmoid(t.leaf(sB_raw));
    f.oB = t.sigmoid(t.leaf(oB_raw));
    f.rB = t.sigmoid(t.leaf(rB_raw));
    f.sP_logits = t.leaf(sP);
    f.oP_logits = t.leaf(oP);
    f.rP_logits = t.leaf(rP);
    return f;
  }
};

}  // namespace

TEST_CASE("pad_ground_truth") {
  FrameAnnotation gt;
  CHECK(pad_ground_truth(gt, 4) == std::vector<int>{-1, -1, -1, -1});

  gt.triplets.resize(2);
  CHECK(pad_ground_truth(gt, 4) == std::vector<int>{0, 1, -1, -1});

  gt.triplets.resize(4);
  CHECK(pad_ground_truth(gt, 4) == std::vector<int>{0, 1, 2, 3});

  gt.triplets.resize(5);
  CHECK_THROWS_AS(pad_ground_truth(gt, 4), std::invalid_argument);
}

TEST_CASE("perfect predictions drive every term to zero") {
  Rng rng(21);
  TinyInstance inst(rng, 3, 2, 3, 2);
  // overwrite raw outputs so that sigmoid(raw) equals the gt boxes and the
  // class logits are near one-hot
  auto logit = [](double p) { return std::log(p / (1 - p)); };
  for (int j = 0; j < 2; ++j) {
    const Triplet& g = inst.gt.triplets[j];
    Box rr = union_box(g.subject_box, g.object_box);
    Box boxes[3] = {g.subject_box, g.object_box, rr};
    Parameter* raws[3] = {&inst.sB_raw, &inst.oB_raw, &inst.rB_raw};
    for (int b = 0; b < 3; ++b) {
      raws[b]->value(j, 0) = logit(boxes[b].cx);
      raws[b]->value(j, 1) = logit(boxes[b].cy);
      raws[b]->value(j, 2) = logit(boxes[b].w);
      raws[b]->value(j, 3) = logit(boxes[b].h);
    }
    inst.sP.value.row(j).setConstant(-40.0);
    inst.sP.value(j, g.subject_label) = 40.0;
    inst.oP.value.row(j).setConstant(-40.0);
    inst.oP.value(j, g.object_label) = 40.0;
    inst.rP.value.row(j).setConstant(-40.0);
    for (int r : g.relations) inst.rP.value(j, r) = 40.0;
  }
  // unmatched query favors the no-triplet class and all-zero relations
  inst.sP.value.row(2).setConstant(-40.0);
  inst.sP.value(2, 3) = 40.0;
  inst.oP.value.row(2).setConstant(-40.0);
  inst.oP.value(2, 3) = 40.0;
  inst.rP.value.row(2).setConstant(-40.0);

  Assignment assignment;
  assignment.pairs = {{0, 0}, {1, 1}};
  CriterionConfig cfg;
  Tape t;
  LossTerms terms = compute_loss(t, inst.outputs(t), inst.gt, assignment, cfg);
  LossBreakdown b = breakdown(t, terms);
  CHECK(b.l_giou == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(b.l_l1 < 1e-9);
  CHECK(b.l_obj < 1e-9);
  CHECK(b.l_rel < 1e-9);
  CHECK(b.total < 1e-6);
}

TEST_CASE("zero coefficients zero the total") {
  Rng rng(22);
  TinyInstance inst(rng, 3, 1, 2, 2);
  Assignment a;
  a.pairs = {{1, 0}};
  CriterionConfig cfg;
  cfg.lambda_giou = cfg.lambda_l1 = cfg.lambda_obj = cfg.lambda_rel = 0.0;
  Tape t;
  LossTerms terms = compute_loss(t, inst.outputs(t), inst.gt, a, cfg);
  CHECK(breakdown(t, terms).total == 0.0);
}

TEST_CASE("total matches an independent per-term recomputation") {
  Rng rng(23);
  TinyInstance inst(rng, 3, 1, 2, 2);
  Assignment a;
  a.pairs = {{2, 0}};
  CriterionConfig cfg;
  cfg.lambda_giou = 0.7;
  cfg.lambda_l1 = 2.5;
  cfg.lambda_obj = 1.1;
  cfg.lambda_rel = 0.9;

  Tape t;
  FrameOutputs out = inst.outputs(t);
  LossTerms terms = compute_loss(t, out, inst.gt, a, cfg);
  LossBreakdown got = breakdown(t, terms);

  // independent recomputation from the raw parameter values
  const Triplet& g = inst.gt.triplets[0];
  auto sig = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  auto box_at = [&](const Parameter& raw, int row) {
    return Box{sig(raw.value(row, 0)), sig(raw.value(row, 1)), sig(raw.value(row, 2)),
               sig(raw.value(row, 3))};
  };
  Box ps = box_at(inst.sB_raw, 2), po = box_at(inst.oB_raw, 2), pr = box_at(inst.rB_raw, 2);
  Box rr = union_box(g.subject_box, g.object_box);
  auto l1 = [](const Box& x, const Box& y) {
    return std::abs(x.cx - y.cx) + std::abs(x.cy - y.cy) + std::abs(x.w - y.w) +
           std::abs(x.h - y.h);
  };
  double want_l1 = l1(ps, g.subject_box) + l1(po, g.object_box) + l1(pr, rr);
  double want_giou = (1 - giou(ps, g.subject_box)) + (1 - giou(po, g.object_box)) +
                     (1 - giou(pr, rr));
  CHECK(got.l_l1 == doctest::Approx(want_l1).epsilon(1e-12));
  CHECK(got.l_giou == doctest::Approx(want_giou).epsilon(1e-12));

  // weighted-mean cross entropy over subject and object heads
  auto ce_row = [&](const Mat& logits, int row, int label) {
    double m = logits.row(row).maxCoeff();
    double lse = m + std::log((logits.row(row).array() - m).exp().sum());
    return lse - logits(row, label);
  };
  double wsum = 1.0 + 2 * cfg.no_object_weight;
  double want_obj = 0.0;
  for (const Mat* logits : {&inst.sP.value, &inst.oP.value}) {
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) {
      int label = (i == 2) ? (logits == &inst.sP.value ? g.subject_label : g.object_label)
                           : 2;  // phi index = n_obj = 2
      double w = (i == 2) ? 1.0 : cfg.no_object_weight;
      acc += w * ce_row(*logits, i, label);
    }
    want_obj += acc / wsum;
  }
  CHECK(got.l_obj == doctest::Approx(want_obj).epsilon(1e-12));

  // bce over all entries; matched row 2 has the multi-hot target
  double want_rel = 0.0;
  for (int i = 0; i < 3; ++i) {
    for (int r = 0; r < 2; ++r) {
      double target = 0.0;
      if (i == 2) {
        for (int gr : g.relations)
          if (gr == r) target = 1.0;
      }
      double x = inst.rP.value(i, r);
      want_rel += std::max(x, 0.0) - x * target + std::log1p(std::exp(-std::abs(x)));
    }
  }
  want_rel /= 6.0;
  CHECK(got.l_rel == doctest::Approx(want_rel).epsilon(1e-12));

  double want_total = cfg.lambda_giou * want_giou + cfg.lambda_l1 * want_l1 +
                      cfg.lambda_obj * want_obj + cfg.lambda_rel * want_rel;
  CHECK(got.total == doctest::Approx(want_total).epsilon(1e-12));
}

TEST_CASE("total is linear in each coefficient with a fixed assignment") {
  Rng rng(24);
  TinyInstance inst(rng, 4, 2, 3, 3);
  Assignment a;
  a.pairs = {{0, 0}, {3, 1}};

  auto total_at = [&](double lg, double ll, double lo, double lr) {
    CriterionConfig cfg;
    cfg.lambda_giou = lg;
    cfg.lambda_l1 = ll;
    cfg.lambda_obj = lo;
    cfg.lambda_rel = lr;
    Tape t;
    return breakdown(t, compute_loss(t, inst.outputs(t), inst.gt, a, cfg)).total;
  };
  double base = total_at(1, 1, 1, 1);
  double bump_g = total_at(3, 1, 1, 1);
  double bump_l = total_at(1, 2, 1, 1);
  Tape t;
  CriterionConfig unit;
  unit.lambda_l1 = 1.0;
  LossBreakdown b = breakdown(t, compute_loss(t, inst.outputs(t), inst.gt, a, unit));
  CHECK(bump_g - base == doctest::Approx(2.0 * b.l_giou).epsilon(1e-9));
  CHECK(bump_l - base == doctest::Approx(1.0 * b.l_l1).epsilon(1e-9));
}

TEST_CASE("ground-truth permutation leaves the matched loss unchanged") {
  Rng rng(25);
  for (int trial = 0; trial < 100; ++trial) {
    TinyInstance inst(rng, 5, 3, 3, 3);
    MatchConfig mcfg;
    CriterionConfig ccfg;

    auto loss_for = [&](const FrameAnnotation& gt) {
      Tape t;
      FrameOutputs out = inst.outputs(t);
      PredictionSet pred;
      pred.sB = boxes_from_matrix(t.val(out.sB));
      pred.oB = boxes_from_matrix(t.val(out.oB));
      pred.rB = boxes_from_matrix(t.val(out.rB));
      auto softmax = [](const Mat& z) {
        Mat p(z.rows(), z.cols());
        for (Eigen::Index i = 0; i < z.rows(); ++i) {
          double m = z.row(i).maxCoeff();
          Eigen::RowVectorXd e = (z.row(i).array() - m).exp();
          p.row(i) = e / e.sum();
        }
        return p;
      };
      pred.sP = softmax(inst.sP.value);
      pred.oP = softmax(inst.oP.value);
      pred.rP = inst.rP.value.unaryExpr(
          [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
      Assignment a = hungarian(build_cost_matrix(pred, gt, mcfg));
      return breakdown(t, compute_loss(t, out, gt, a, ccfg)).total;
    };

    FrameAnnotation permuted = inst.gt;
    std::swap(permuted.triplets[0], permuted.triplets[2]);
    REQUIRE(std::abs(loss_for(inst.gt) - loss_for(permuted)) < 1e-9);
  }
}

TEST_CASE("subject_fixed ignores subject outputs entirely") {
  Rng rng(26);
  TinyInstance inst(rng, 3, 2, 3, 2);
  Assignment a;
  a.pairs = {{0, 0}, {1, 1}};
  CriterionConfig cfg;
  cfg.subject_fixed = true;

  Tape t1;
  double before = breakdown(t1, compute_loss(t1, inst.outputs(t1), inst.gt, a, cfg)).total;

  // arbitrary changes to subject head outputs must not move the loss
  inst.sB_raw.value.setConstant(3.21);
  inst.sP.value.setConstant(-1.5);
  Tape t2;
  double after = breakdown(t2, compute_loss(t2, inst.outputs(t2), inst.gt, a, cfg)).total;
  CHECK(before == doctest::Approx(after).epsilon(1e-15));

  // and the gradients through them are exactly zero
  Tape t3;
  LossTerms terms = compute_loss(t3, inst.outputs(t3), inst.gt, a, cfg);
  inst.sB_raw.grad.setZero();
  inst.sP.grad.setZero();
  t3.backward(terms.total);
  CHECK(inst.sB_raw.grad.cwiseAbs().maxCoeff() == 0.0);
  CHECK(inst.sP.grad.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("assignment validation") {
  Rng rng(27);
  TinyInstance inst(rng, 3, 1, 2, 2);
  Assignment bad;
  bad.pairs = {{5, 0}};
  CriterionConfig cfg;
  Tape t;
  FrameOutputs out = inst.outputs(t);
  CHECK_THROWS_AS(compute_loss(t, out, inst.gt, bad, cfg), std::invalid_argument);
  Assignment bad2;
  bad2.pairs = {{0, 4}};
  CHECK_THROWS_AS(compute_loss(t, out, inst.gt, bad2, cfg), std::invalid_argument);
}
