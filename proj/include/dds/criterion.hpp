#pragma once

#include <vector>

#include "dds/annotations.hpp"
#include "dds/matching.hpp"
#include "dds/tape.hpp"

namespace dds {

// Raw per-frame head outputs on a tape. sP/oP/rP hold logits; boxes are
// sigmoid outputs in center form. rB is invalid when the relation-region
// head is disabled.
struct FrameOutputs {
  Value sB, oB, rB;
  Value sP_logits, oP_logits, rP_logits;
};

struct LossBreakdown {
  double l_giou = 0.0;
  double l_l1 = 0.0;
  double l_obj = 0.0;
  double l_rel = 0.0;
  double total = 0.0;
};

struct LossTerms {
  Value giou, l1, obj, rel, total;
};

struct CriterionConfig {
  double lambda_giou = 1.0;
  double lambda_l1 = 2.5;
  double lambda_obj = 1.0;
  double lambda_rel = 1.0;
  double no_object_weight = 0.1;
  RelationRegionMode rr_mode = RelationRegionMode::kUnion;
  double rr_theta = 0.5;
  bool subject_fixed = false;
  bool use_relation_region = true;
};

// Pads a frame's targets to n_q slots: entry j holds the ground-truth index
// for the first N_M slots and -1 (the no-triplet marker) for the rest.
std::vector<int> pad_ground_truth(const FrameAnnotation& gt, int n_q);

// Box regression (L1 + gIoU, averaged over real ground truths), label
// cross-entropy with a down-weighted no-triplet class, and multi-label
// relation BCE. Matched queries regress subject box, object box, and the
// relation region; unmatched queries target the no-triplet class and the
// all-zero relation vector.
LossTerms compute_loss(Tape& t, const FrameOutputs& pred, const FrameAnnotation& gt,
                       const Assignment& assignment, const CriterionConfig& cfg);

LossBreakdown breakdown(const Tape& t, const LossTerms& terms);

}  // namespace dds
