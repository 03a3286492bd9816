#pragma once

#include <vector>

#include "dds/geometry.hpp"
#include "dds/tape.hpp"

namespace dds {

// Plain per-frame head outputs, one row/entry per query. Probabilities, not
// logits: sP/oP rows are softmax over the N_o real classes plus the trailing
// no-triplet class; rP entries are independent sigmoids.
struct PredictionSet {
  std::vector<Box> sB;
  std::vector<Box> oB;
  std::vector<Box> rB;  // empty when the relation-region head is disabled
  Mat sP;               // n_q x (N_o + 1)
  Mat oP;               // n_q x (N_o + 1)
  Mat rP;               // n_q x N_r

  int num_queries() const { return static_cast<int>(sB.size()); }
};

std::vector<Box> boxes_from_matrix(const Mat& m);

}  // namespace dds
