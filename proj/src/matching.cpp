#include "dds/matching.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dds {

std::vector<Box> boxes_from_matrix(const Mat& m) {
  std::vector<Box> out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out[i] = {m(i, 0), m(i, 1), m(i, 2), m(i, 3)};
  }
  return out;
}

double Assignment::total_cost(const CostMatrix& cost) const {
  double total = 0.0;
  for (auto [pi, gi] : pairs) total += cost.entries(pi, gi);
  return total;
}

double box_match_cost(const Box& pred, const Box& gt) {
  double l1 = std::abs(pred.cx - gt.cx) + std::abs(pred.cy - gt.cy) +
              std::abs(pred.w - gt.w) + std::abs(pred.h - gt.h);
  return l1 + (1.0 - giou(pred, gt));
}

double class_match_cost(const Eigen::RowVectorXd& probs, int gt_label) {
  if (gt_label < 0 || gt_label >= probs.size()) {
    throw std::invalid_argument("class_match_cost: label out of range");
  }
  return -probs(gt_label);
}

double relation_match_cost(const Eigen::RowVectorXd& rel_probs,
                           const std::vector<int>& gt_relations) {
  if (gt_relations.empty()) {
    throw std::invalid_argument("relation_match_cost: empty ground-truth relation set");
  }
  double sum = 0.0;
  for (int r : gt_relations) {
    if (r < 0 || r >= rel_probs.size()) {
      throw std::invalid_argument("relation_match_cost: relation index out of range");
    }
    sum += rel_probs(r);
  }
  return -sum / static_cast<double>(gt_relations.size());
}

CostMatrix build_cost_matrix(const PredictionSet& pred, const FrameAnnotation& gt,
                             const MatchConfig& cfg) {
  int n_q = pred.num_queries();
  int n_gt = static_cast<int>(gt.triplets.size());
  if (n_gt < 1) throw std::invalid_argument("build_cost_matrix: no ground truths");
  if (n_gt > n_q) throw std::invalid_argument("build_cost_matrix: more ground truths than queries");

  CostMatrix cost;
  cost.entries = Mat::Zero(n_q, n_gt);
  for (int j = 0; j < n_gt; ++j) {
    const Triplet& g = gt.triplets[j];
    Box rr;
    if (cfg.use_relation_region) {
      rr = relation_region(g.subject_box, g.object_box, cfg.rr_mode, cfg.rr_theta);
    }
    for (int i = 0; i < n_q; ++i) {
      double box_cost = box_match_cost(pred.oB[i], g.object_box);
      double cls_cost = class_match_cost(pred.oP.row(i), g.object_label);
      if (!cfg.subject_fixed) {
        box_cost += box_match_cost(pred.sB[i], g.subject_box);
        cls_cost += class_match_cost(pred.sP.row(i), g.subject_label);
      }
      if (cfg.use_relation_region) {
        box_cost += box_match_cost(pred.rB[i], rr);
      }
      double rel_cost = relation_match_cost(pred.rP.row(i), g.relations);
      cost.entries(i, j) = cfg.eta_b * box_cost + cfg.eta_o * cls_cost + cfg.eta_r * rel_cost;
    }
  }
  return cost;
}

Assignment hungarian(const CostMatrix& cost) {
  int n = cost.num_ground_truths();  // rows of the internal problem
  int m = cost.num_predictions();    // columns
  if (n > m) throw std::invalid_argument("hungarian: more ground truths than predictions");
  if (!cost.entries.allFinite()) throw std::invalid_argument("hungarian: non-finite costs");
  if (n == 0) return {};

  // Shortest-augmenting-path formulation with potentials, 1-indexed.
  // Assigns each ground truth (row) to a distinct prediction (column).
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<int> p(m + 1, 0), way(m + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(m + 1, kInf);
    std::vector<char> used(m + 1, false);
    do {
      used[j0] = true;
      int i0 = p[j0], j1 = 0;
      double delta = kInf;
      for (int j = 1; j <= m; ++j) {
        if (used[j]) continue;
        double cur = cost.entries(j - 1, i0 - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }

  Assignment out;
  for (int j = 1; j <= m; ++j) {
    if (p[j] != 0) out.pairs.emplace_back(j - 1, p[j] - 1);
  }
  return out;
}

namespace {

void brute_force_rec(const Mat& c, int gt, std::vector<int>& current,
                     std::vector<char>& used, double running, double& best,
                     std::vector<int>& best_assign) {
  int n_gt = static_cast<int>(c.cols());
  int n_q = static_cast<int>(c.rows());
  if (gt == n_gt) {
    if (running < best) {
      best = running;
      best_assign = current;
    }
    return;
  }
  for (int i = 0; i < n_q; ++i) {
    if (used[i]) continue;
    used[i] = true;
    current[gt] = i;
    brute_force_rec(c, gt + 1, current, used, running + c(i, gt), best, best_assign);
    used[i] = false;
  }
}

}  // namespace

Assignment brute_force_match(const CostMatrix& cost) {
  int n = cost.num_ground_truths();
  if (n > cost.num_predictions()) {
    throw std::invalid_argument("brute_force_match: more ground truths than predictions");
  }
  if (n > 8) {
    throw std::invalid_argument("brute_force_match: refusing n_gt > 8 (factorial search)");
  }
  if (n == 0) return {};
  std::vector<int> current(n, -1), best_assign;
  std::vector<char> used(cost.num_predictions(), false);
  double best = std::numeric_limits<double>::infinity();
  brute_force_rec(cost.entries, 0, current, used, 0.0, best, best_assign);
  Assignment out;
  for (int j = 0; j < n; ++j) out.pairs.emplace_back(best_assign[j], j);
  return out;
}

}  // namespace dds
