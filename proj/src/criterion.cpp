#include "dds/criterion.hpp"

#include <algorithm>
#include <stdexcept>

namespace dds {

void validate_frame(const FrameAnnotation& frame, int n_obj, int n_rel,
                    const std::string& locus) {
  for (size_t k = 0; k < frame.triplets.size(); ++k) {
    const Triplet& tr = frame.triplets[k];
    auto fail = [&](const std::string& msg) {
      throw std::invalid_argument(locus + ", triplet " + std::to_string(k) + ": " + msg);
    };
    if (tr.subject_label < 0 || tr.subject_label >= n_obj) fail("subject label out of range");
    if (tr.object_label < 0 || tr.object_label >= n_obj) fail("object label out of range");
    if (tr.relations.empty()) fail("empty relation set");
    for (int r : tr.relations) {
      if (r < 0 || r >= n_rel) fail("relation index out of range");
    }
    if (!is_valid(tr.subject_box)) fail("invalid subject box");
    if (!is_valid(tr.object_box)) fail("invalid object box");
  }
}

std::vector<int> pad_ground_truth(const FrameAnnotation& gt, int n_q) {
  int n_m = static_cast<int>(gt.triplets.size());
  if (n_m > n_q) {
    throw std::invalid_argument("pad_ground_truth: frame has more triplets (" +
                                std::to_string(n_m) + ") than query slots (" +
                                std::to_string(n_q) + ")");
  }
  std::vector<int> padded(n_q, -1);
  for (int j = 0; j < n_m; ++j) padded[j] = j;
  return padded;
}

LossTerms compute_loss(Tape& t, const FrameOutputs& pred, const FrameAnnotation& gt,
                       const Assignment& assignment, const CriterionConfig& cfg) {
  int n_q = static_cast<int>(t.val(pred.oP_logits).rows());
  int n_cls = static_cast<int>(t.val(pred.oP_logits).cols());
  int n_rel = static_cast<int>(t.val(pred.rP_logits).cols());
  int n_gt = static_cast<int>(gt.triplets.size());
  int phi = n_cls - 1;

  std::vector<int> matched_gt(n_q, -1);
  for (auto [pi, gi] : assignment.pairs) {
    if (pi < 0 || pi >= n_q || gi < 0 || gi >= n_gt) {
      throw std::invalid_argument("compute_loss: assignment index out of range");
    }
    matched_gt[pi] = gi;
  }

  std::vector<int> pred_idx;
  std::vector<int> gt_idx;
  for (int i = 0; i < n_q; ++i) {
    if (matched_gt[i] >= 0) {
      pred_idx.push_back(i);
      gt_idx.push_back(matched_gt[i]);
    }
  }

  LossTerms out;
  int k = static_cast<int>(pred_idx.size());
  if (k > 0) {
    double inv = 1.0 / static_cast<double>(n_gt);
    Mat sub_t(k, 4), obj_t(k, 4), rr_t(k, 4);
    for (int r = 0; r < k; ++r) {
      const Triplet& g = gt.triplets[gt_idx[r]];
      sub_t.row(r) << g.subject_box.cx, g.subject_box.cy, g.subject_box.w, g.subject_box.h;
      obj_t.row(r) << g.object_box.cx, g.object_box.cy, g.object_box.w, g.object_box.h;
      if (cfg.use_relation_region) {
        Box rr = relation_region(g.subject_box, g.object_box, cfg.rr_mode, cfg.rr_theta);
        rr_t.row(r) << rr.cx, rr.cy, rr.w, rr.h;
      }
    }
    Value obj_rows = t.gather_rows(pred.oB, pred_idx);
    std::vector<Value> l1_terms = {t.l1_loss(obj_rows, obj_t, inv)};
    std::vector<Value> giou_terms = {t.giou_loss(obj_rows, obj_t, inv)};
    if (!cfg.subject_fixed) {
      Value sub_rows = t.gather_rows(pred.sB, pred_idx);
      l1_terms.push_back(t.l1_loss(sub_rows, sub_t, inv));
      giou_terms.push_back(t.giou_loss(sub_rows, sub_t, inv));
    }
    if (cfg.use_relation_region) {
      Value rr_rows = t.gather_rows(pred.rB, pred_idx);
      l1_terms.push_back(t.l1_loss(rr_rows, rr_t, inv));
      giou_terms.push_back(t.giou_loss(rr_rows, rr_t, inv));
    }
    std::vector<double> ones(l1_terms.size(), 1.0);
    out.l1 = t.linear_comb(l1_terms, ones);
    out.giou = t.linear_comb(giou_terms, ones);
  } else {
    out.l1 = t.constant(Mat::Zero(1, 1));
    out.giou = t.constant(Mat::Zero(1, 1));
  }

  // Classification: matched queries carry the true label at weight 1,
  // no-triplet slots carry the phi class at the no-object weight.
  std::vector<int> obj_targets(n_q, phi), sub_targets(n_q, phi);
  std::vector<double> weights(n_q, cfg.no_object_weight);
  for (int r = 0; r < k; ++r) {
    const Triplet& g = gt.triplets[gt_idx[r]];
    obj_targets[pred_idx[r]] = g.object_label;
    sub_targets[pred_idx[r]] = g.subject_label;
    weights[pred_idx[r]] = 1.0;
  }
  std::vector<Value> obj_terms = {
      t.softmax_cross_entropy(pred.oP_logits, obj_targets, weights)};
  if (!cfg.subject_fixed) {
    obj_terms.push_back(t.softmax_cross_entropy(pred.sP_logits, sub_targets, weights));
  }
  out.obj = t.linear_comb(obj_terms, std::vector<double>(obj_terms.size(), 1.0));

  Mat rel_targets = Mat::Zero(n_q, n_rel);
  for (int r = 0; r < k; ++r) {
    for (int rel : gt.triplets[gt_idx[r]].relations) {
      if (rel < 0 || rel >= n_rel) {
        throw std::invalid_argument("compute_loss: relation index out of range");
      }
      rel_targets(pred_idx[r], rel) = 1.0;
    }
  }
  out.rel = t.bce_with_logits(pred.rP_logits, rel_targets);

  out.total = t.linear_comb({out.giou, out.l1, out.obj, out.rel},
                            {cfg.lambda_giou, cfg.lambda_l1, cfg.lambda_obj,
                             cfg.lambda_rel});
  return out;
}

LossBreakdown breakdown(const Tape& t, const LossTerms& terms) {
  LossBreakdown b;
  b.l_giou = t.val(terms.giou)(0, 0);
  b.l_l1 = t.val(terms.l1)(0, 0);
  b.l_obj = t.val(terms.obj)(0, 0);
  b.l_rel = t.val(terms.rel)(0, 0);
  b.total = t.val(terms.total)(0, 0);
  return b;
}

}  // namespace dds
