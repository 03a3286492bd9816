#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dds/annotations.hpp"
#include "dds/dataset.hpp"
#include "dds/inference.hpp"

namespace dds {

enum class Partition { kSeen, kUnseen, kOther };

struct ClassAp {
  TripletClass cls;
  int gt_count = 0;
  double ap = 0.0;
  Partition partition = Partition::kOther;
};

struct RecallRow {
  double overall = 0.0;
  double seen = 0.0;
  double unseen = 0.0;
};

struct EvalReport {
  std::map<int, RecallRow> recall_at;  // K -> micro-averaged recall
  double map_unseen = 0.0;
  double map_seen = 0.0;
  double map_full = 0.0;
  int classes_unseen = 0;  // classes with >= 1 GT contributing to each mean
  int classes_seen = 0;
  std::vector<ClassAp> per_class;
};

// All predictions for one evaluated frame, already truncated to the
// evaluation top-k.
struct FrameDetections {
  std::string video_id;
  int frame_index = 0;
  std::vector<TripletPrediction> predictions;
  const FrameAnnotation* ground_truth = nullptr;
};

// Greedy matcher: labels must agree exactly and both boxes need IoU >= the
// threshold against an unclaimed ground-truth instance. `claimed` holds
// (triplet index, relation) pairs already consumed by higher-ranked
// predictions. Returns the matched triplet index.
std::optional<int> match_prediction(const TripletPrediction& pred,
                                    const FrameAnnotation& gts,
                                    double iou_threshold,
                                    std::vector<std::vector<char>>& claimed);

// SGDet recall: per frame, the top-K predictions by score are matched
// greedily in score order; micro-average over all ground-truth relation
// instances of the whole set. The split partitions instances into the
// seen/unseen columns (pass nullptr for overall-only).
RecallRow recall_at_k(const std::vector<FrameDetections>& frames, int k,
                      double iou_threshold, const SplitSpec* split);

// Per-class average precision with all-point interpolation, partitioned by
// the split's seen/unseen class sets.
EvalReport evaluate(const std::vector<FrameDetections>& frames, const SplitSpec& split,
                    const std::vector<int>& recall_ks, double iou_threshold);

std::string report_to_text(const EvalReport& report);
std::string report_table_tsv(const EvalReport& report);

}  // namespace dds
