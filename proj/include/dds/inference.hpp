#pragma once

#include <string>
#include <vector>

#include "dds/predictions.hpp"

namespace dds {

// A composed relationship-triplet detection. Score is the product of the
// relation probability and the max-confidence subject/object class scores.
struct TripletPrediction {
  Box subject_box;
  int subject_label = 0;
  Box object_box;
  int object_label = 0;
  int relation_label = 0;
  double score = 0.0;
  int frame_index = 0;
  int query_index = 0;
};

struct InferenceConfig {
  bool subject_fixed = false;
  int fixed_subject_label = 0;
};

// Pairs the q-th subject with the q-th object, labels each by the
// max-probability real class (the no-triplet class is excluded), and emits
// one scored candidate per (query, relation). Boxes are clamped to the frame.
std::vector<TripletPrediction> compose_triplets(const PredictionSet& pred,
                                                int frame_index,
                                                const InferenceConfig& cfg);

// Descending score; ties broken by (query index, relation index) ascending.
std::vector<TripletPrediction> top_k(std::vector<TripletPrediction> candidates,
                                     int k);

}  // namespace dds
