#include "dds/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dds {

namespace {

bool score_order(const TripletPrediction& a, const TripletPrediction& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.query_index != b.query_index) return a.query_index < b.query_index;
  return a.relation_label < b.relation_label;
}

int count_instances(const FrameAnnotation& gts) {
  int n = 0;
  for (const auto& tr : gts.triplets) n += static_cast<int>(tr.relations.size());
  return n;
}

}  // namespace

std::optional<int> match_prediction(const TripletPrediction& pred,
                                    const FrameAnnotation& gts,
                                    double iou_threshold,
                                    std::vector<std::vector<char>>& claimed) {
  if (!(iou_threshold > 0.0 && iou_threshold <= 1.0)) {
    throw std::invalid_argument("match_prediction: threshold must lie in (0, 1]");
  }
  int best = -1;
  double best_quality = -1.0;
  for (size_t j = 0; j < gts.triplets.size(); ++j) {
    const Triplet& g = gts.triplets[j];
    if (g.subject_label != pred.subject_label || g.object_label != pred.object_label)
      continue;
    auto rel_it = std::find(g.relations.begin(), g.relations.end(), pred.relation_label);
    if (rel_it == g.relations.end()) continue;
    size_t rel_pos = static_cast<size_t>(rel_it - g.relations.begin());
    if (claimed[j][rel_pos]) continue;
    double iou_s = iou(pred.subject_box, g.subject_box);
    double iou_o = iou(pred.object_box, g.object_box);
    if (iou_s < iou_threshold || iou_o < iou_threshold) continue;
    double quality = std::min(iou_s, iou_o);
    if (quality > best_quality) {
      best_quality = quality;
      best = static_cast<int>(j);
    }
  }
  if (best < 0) return std::nullopt;
  const Triplet& g = gts.triplets[best];
  size_t rel_pos = static_cast<size_t>(
      std::find(g.relations.begin(), g.relations.end(), pred.relation_label) -
      g.relations.begin());
  claimed[best][rel_pos] = 1;
  return best;
}

RecallRow recall_at_k(const std::vector<FrameDetections>& frames, int k,
                      double iou_threshold, const SplitSpec* split) {
  if (k < 1) throw std::invalid_argument("recall_at_k: K must be >= 1");
  std::set<TripletClass> seen, unseen;
  if (split) {
    seen.insert(split->seen.begin(), split->seen.end());
    unseen.insert(split->unseen.begin(), split->unseen.end());
  }
  long matched = 0, total = 0;
  long matched_seen = 0, total_seen = 0;
  long matched_unseen = 0, total_unseen = 0;
  for (const auto& frame : frames) {
    const FrameAnnotation& gts = *frame.ground_truth;
    total += count_instances(gts);
    for (const auto& tr : gts.triplets) {
      for (int r : tr.relations) {
        TripletClass c{tr.subject_label, tr.object_label, r};
        if (unseen.count(c)) ++total_unseen;
        else if (seen.count(c)) ++total_seen;
      }
    }
    std::vector<TripletPrediction> preds = frame.predictions;
    std::sort(preds.begin(), preds.end(), score_order);
    if (static_cast<int>(preds.size()) > k) preds.resize(k);
    std::vector<std::vector<char>> claimed;
    for (const auto& tr : gts.triplets) {
      claimed.emplace_back(tr.relations.size(), 0);
    }
    for (const auto& p : preds) {
      if (auto gi = match_prediction(p, gts, iou_threshold, claimed)) {
        ++matched;
        TripletClass c{p.subject_label, p.object_label, p.relation_label};
        (void)gi;
        if (unseen.count(c)) ++matched_unseen;
        else if (seen.count(c)) ++matched_seen;
      }
    }
  }
  RecallRow row;
  row.overall = total > 0 ? static_cast<double>(matched) / total : 0.0;
  row.seen = total_seen > 0 ? static_cast<double>(matched_seen) / total_seen : 0.0;
  row.unseen = total_unseen > 0 ? static_cast<double>(matched_unseen) / total_unseen : 0.0;
  return row;
}

namespace {

// All-point interpolated AP from a ranked TP/FP sequence.
double average_precision(const std::vector<char>& tp_flags, int npos) {
  if (npos == 0) return 0.0;
  std::vector<double> precision, recall;
  int tp = 0, fp = 0;
  for (char is_tp : tp_flags) {
    if (is_tp) ++tp;
    else ++fp;
    precision.push_back(static_cast<double>(tp) / (tp + fp));
    recall.push_back(static_cast<double>(tp) / npos);
  }
  double ap = 0.0;
  double prev_recall = 0.0;
  // precision envelope from the right
  for (size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  for (size_t i = 0; i < precision.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return ap;
}

}  // namespace

EvalReport evaluate(const std::vector<FrameDetections>& frames, const SplitSpec& split,
                    const std::vector<int>& recall_ks, double iou_threshold) {
  EvalReport report;
  for (int k : recall_ks) {
    report.recall_at[k] = recall_at_k(frames, k, iou_threshold, &split);
  }

  // Enumerate all classes with ground truth plus all predicted classes.
  std::map<TripletClass, int> gt_counts;
  for (const auto& frame : frames) {
    for (const auto& tr : frame.ground_truth->triplets) {
      for (int r : tr.relations) {
        ++gt_counts[{tr.subject_label, tr.object_label, r}];
      }
    }
  }

  std::set<TripletClass> seen(split.seen.begin(), split.seen.end());
  std::set<TripletClass> unseen(split.unseen.begin(), split.unseen.end());

  // Corpus-wide ranked predictions per class.
  std::map<TripletClass, std::vector<std::pair<int, int>>> class_preds;  // (frame, pred idx)
  for (size_t fi = 0; fi < frames.size(); ++fi) {
    const auto& preds = frames[fi].predictions;
    for (size_t pi = 0; pi < preds.size(); ++pi) {
      TripletClass c{preds[pi].subject_label, preds[pi].object_label,
                     preds[pi].relation_label};
      class_preds[c].emplace_back(static_cast<int>(fi), static_cast<int>(pi));
    }
  }

  double sum_seen = 0.0, sum_unseen = 0.0;
  int n_seen = 0, n_unseen = 0;
  for (const auto& [cls, npos] : gt_counts) {
    if (npos == 0) continue;
    std::vector<std::pair<int, int>> ranked;
    if (auto it = class_preds.find(cls); it != class_preds.end()) ranked = it->second;
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](const std::pair<int, int>& a, const std::pair<int, int>& b) {
                       const auto& pa = frames[a.first].predictions[a.second];
                       const auto& pb = frames[b.first].predictions[b.second];
                       if (pa.score != pb.score) return pa.score > pb.score;
                       if (a.first != b.first) return a.first < b.first;
                       return score_order(pa, pb);
                     });

    // Per-frame claimed state restricted to this class's instances.
    std::map<int, std::vector<std::vector<char>>> claimed_by_frame;
    std::vector<char> tp_flags;
    tp_flags.reserve(ranked.size());
    for (const auto& [fi, pi] : ranked) {
      const auto& frame = frames[fi];
      auto& claimed = claimed_by_frame[fi];
      if (claimed.empty()) {
        for (const auto& tr : frame.ground_truth->triplets) {
          claimed.emplace_back(tr.relations.size(), 0);
        }
      }
      tp_flags.push_back(match_prediction(frame.predictions[pi], *frame.ground_truth,
                                          iou_threshold, claimed)
                             ? 1
                             : 0);
    }
    ClassAp entry;
    entry.cls = cls;
    entry.gt_count = npos;
    entry.ap = average_precision(tp_flags, npos);
    if (unseen.count(cls)) {
      entry.partition = Partition::kUnseen;
      sum_unseen += entry.ap;
      ++n_unseen;
    } else if (seen.count(cls)) {
      entry.partition = Partition::kSeen;
      sum_seen += entry.ap;
      ++n_seen;
    } else {
      entry.partition = Partition::kOther;
    }
    report.per_class.push_back(entry);
  }

  report.classes_seen = n_seen;
  report.classes_unseen = n_unseen;
  report.map_seen = n_seen > 0 ? sum_seen / n_seen : 0.0;
  report.map_unseen = n_unseen > 0 ? sum_unseen / n_unseen : 0.0;
  // Full partition = union of the classes that entered seen and unseen.
  report.map_full =
      (n_seen + n_unseen) > 0 ? (sum_seen + sum_unseen) / (n_seen + n_unseen) : 0.0;
  return report;
}

std::string report_to_text(const EvalReport& report) {
  std::ostringstream out;
  out << "== Recall (SGDet) ==\n";
  for (const auto& [k, r] : report.recall_at) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "R@%d: %.6f (seen %.6f, unseen %.6f)\n", k,
                  r.overall, r.seen, r.unseen);
    out << buf;
  }
  out << "== mAP ==\n";
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "unseen: %.6f (%d classes)\nseen: %.6f (%d classes)\nfull: %.6f\n",
                report.map_unseen, report.classes_unseen, report.map_seen,
                report.classes_seen, report.map_full);
  out << buf;
  return out.str();
}

std::string report_table_tsv(const EvalReport& report) {
  std::ostringstream out;
  out << "subject\tobject\trelation\tgt_count\tap\tpartition\n";
  for (const auto& e : report.per_class) {
    const char* part = e.partition == Partition::kSeen
                           ? "seen"
                           : (e.partition == Partition::kUnseen ? "unseen" : "other");
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%d\t%d\t%d\t%d\t%.6f\t%s\n", e.cls.subject,
                  e.cls.object, e.cls.relation, e.gt_count, e.ap, part);
    out << buf;
  }
  return out.str();
}

}  // namespace dds
