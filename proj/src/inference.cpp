#include "dds/inference.hpp"

#include <algorithm>
#include <stdexcept>

namespace dds {

std::vector<TripletPrediction> compose_triplets(const PredictionSet& pred,
                                                int frame_index,
                                                const InferenceConfig& cfg) {
  int n_q = pred.num_queries();
  int n_rel = static_cast<int>(pred.rP.cols());
  int n_real = static_cast<int>(pred.oP.cols()) - 1;  // trailing column is phi

  std::vector<TripletPrediction> out;
  out.reserve(static_cast<size_t>(n_q) * n_rel);
  for (int q = 0; q < n_q; ++q) {
    int sub_label = cfg.fixed_subject_label;
    double sub_score = 1.0;
    if (!cfg.subject_fixed) {
      Eigen::Index arg = 0;
      pred.sP.row(q).head(n_real).maxCoeff(&arg);
      sub_label = static_cast<int>(arg);
      sub_score = pred.sP(q, arg);
    }
    Eigen::Index obj_arg = 0;
    pred.oP.row(q).head(n_real).maxCoeff(&obj_arg);
    double obj_score = pred.oP(q, obj_arg);

    Box sub_box = clamp_unit(pred.sB[q]);
    Box obj_box = clamp_unit(pred.oB[q]);
    for (int r = 0; r < n_rel; ++r) {
      TripletPrediction tp;
      tp.subject_box = sub_box;
      tp.subject_label = sub_label;
      tp.object_box = obj_box;
      tp.object_label = static_cast<int>(obj_arg);
      tp.relation_label = r;
      tp.score = pred.rP(q, r) * sub_score * obj_score;
      tp.frame_index = frame_index;
      tp.query_index = q;
      out.push_back(tp);
    }
  }
  return out;
}

std::vector<TripletPrediction> top_k(std::vector<TripletPrediction> candidates, int k) {
  if (k < 1) throw std::invalid_argument("top_k: k must be >= 1");
  std::sort(candidates.begin(), candidates.end(),
            [](const TripletPrediction& a, const TripletPrediction& b) {
              if (a.score != b.score) return a.score > b.score;
              if (a.query_index != b.query_index) return a.query_index < b.query_index;
              return a.relation_label < b.relation_label;
            });
  if (static_cast<int>(candidates.size()) > k) candidates.resize(k);
  return candidates;
}

}  // namespace dds
