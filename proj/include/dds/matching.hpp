#pragma once

#include <vector>

#include "dds/annotations.hpp"
#include "dds/geometry.hpp"
#include "dds/predictions.hpp"

namespace dds {

// Rectangular cost matrix over (prediction, real ground truth) pairs.
struct CostMatrix {
  Mat entries;  // n_q x n_gt

  int num_predictions() const { return static_cast<int>(entries.rows()); }
  int num_ground_truths() const { return static_cast<int>(entries.cols()); }
};

// Injective map from ground truths to predictions; predictions absent from
// `pairs` are implicitly matched to the no-triplet padding.
struct Assignment {
  std::vector<std::pair<int, int>> pairs;  // (prediction index, gt index)

  double total_cost(const CostMatrix& cost) const;
};

struct MatchConfig {
  double eta_b = 1.0;
  double eta_o = 1.0;
  double eta_r = 1.0;
  RelationRegionMode rr_mode = RelationRegionMode::kUnion;
  double rr_theta = 0.5;
  bool subject_fixed = false;
  bool use_relation_region = true;
};

// L1 over the four center-form coordinates plus (1 - giou).
double box_match_cost(const Box& pred, const Box& gt);

// Negated probability of the ground-truth label.
double class_match_cost(const Eigen::RowVectorXd& probs, int gt_label);

// Negated mean probability over the ground-truth relation set.
double relation_match_cost(const Eigen::RowVectorXd& rel_probs,
                           const std::vector<int>& gt_relations);

CostMatrix build_cost_matrix(const PredictionSet& pred, const FrameAnnotation& gt,
                             const MatchConfig& cfg);

// Optimal assignment by the Hungarian algorithm (shortest augmenting paths).
Assignment hungarian(const CostMatrix& cost);

// Exhaustive enumeration over all injective maps; ties broken toward the
// lexicographically smallest prediction-index sequence. Test oracle.
Assignment brute_force_match(const CostMatrix& cost);

}  // namespace dds
