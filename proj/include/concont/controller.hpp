// Pseudo-labels, p-scores, confidence gating and adaptive class-balanced
// thresholds.
#pragma once

#include "concont/common.hpp"
#include "concont/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

namespace concont {

struct PseudoLabel {
  int class_index = 0;
  bool confident = false;
};

/// Confidence score of one prediction: label information + candidate
/// margin + supervised learning state.
struct PScore {
  double p1 = 0.0;
  double p2 = 0.0;
  double p3 = 0.0;
  double total = 0.0;
};

/// Masked argmax; ties go to the lowest class index.
inline int predict_pseudo_label(const Vector& pred_weak, const LabelMask& mask) {
  if (pred_weak.size() != mask.size()) throw StructuralError("predict_pseudo_label: width mismatch");
  int best = -1;
  double best_val = 0.0;
  for (int j = 0; j < mask.size(); ++j) {
    if (!mask.test(j)) continue;
    if (best < 0 || pred_weak[j] > best_val) {
      best = j;
      best_val = pred_weak[j];
    }
  }
  if (best < 0) throw DomainError("predict_pseudo_label: empty candidate mask");
  return best;
}

inline PScore compute_p_score(const Vector& pred_weak, const LabelMask& mask) {
  const int n_classes = mask.size();
  if (pred_weak.size() != n_classes) throw StructuralError("compute_p_score: width mismatch");
  const int n_cand = mask.count();
  if (n_cand == 0) throw DomainError("compute_p_score: empty candidate mask");

  // Top two entries of the masked vector; non-candidates contribute 0.
  double first = 0.0, second = 0.0, mass = 0.0;
  for (int j = 0; j < n_classes; ++j) {
    const double v = mask.test(j) ? pred_weak[j] : 0.0;
    mass += v;
    if (v > first) {
      second = first;
      first = v;
    } else if (v > second) {
      second = v;
    }
  }

  PScore s;
  s.p1 = 1.0 / n_cand;
  if (mass > 0.0) {
    s.p2 = (first - second) / mass;
  } else {
    s.p2 = 0.0;
    warn(Warning::empty_candidate_mass);
  }
  s.p3 = n_cand == n_classes ? 0.0 : (1.0 - mass) / (n_classes - n_cand);
  s.total = s.p1 + s.p2 + s.p3;
  return s;
}

struct AdaptiveThresholds {
  Vector tau;
  double lower = 0.5;
  double upper = 0.95;
  double gamma = 1.0;

  static AdaptiveThresholds uniform(int n_classes, double init, double lower, double upper, double gamma) {
    if (n_classes < 1) throw ConfigError("thresholds: n_classes must be positive");
    if (!(lower <= upper)) throw ConfigError("thresholds: lower bound exceeds upper bound");
    if (!(gamma > 0.0)) throw ConfigError("thresholds: gamma must be > 0");
    AdaptiveThresholds t{Vector::Constant(n_classes, std::clamp(init, lower, upper)), lower, upper, gamma};
    return t;
  }

  /// Defaults: 0.8 in [0.5, 0.95] up to ten classes, 0.6 in [0.4, 0.8] beyond.
  static AdaptiveThresholds defaults_for(int n_classes) {
    return n_classes <= 10 ? uniform(n_classes, 0.8, 0.5, 0.95, 1.0) : uniform(n_classes, 0.6, 0.4, 0.8, 1.0);
  }
};

/// Per-class counts of confident pseudo-labels for one step.
struct BalanceCounts {
  std::vector<double> s;

  double total() const { return std::accumulate(s.begin(), s.end(), 0.0); }
  double mean() const { return s.empty() ? 0.0 : total() / static_cast<double>(s.size()); }
};

inline bool is_confident(const PScore& score, int pseudo, const AdaptiveThresholds& thresholds) {
  return score.total >= thresholds.tau[pseudo];
}

/// Pre-clamp deltas -((mean - s_j) / total) * gamma. Rounding residue is
/// folded into the last class so the deltas sum (in index order) to exactly 0.
inline Vector threshold_deltas(const AdaptiveThresholds& thresholds, const BalanceCounts& counts) {
  const auto n = thresholds.tau.size();
  if (static_cast<Eigen::Index>(counts.s.size()) != n)
    throw StructuralError("update_thresholds: count vector width mismatch");
  Vector delta = Vector::Zero(n);
  const double total = counts.total();
  if (total == 0.0 || n == 0) return delta;
  const double mean = total / static_cast<double>(n);
  double head = 0.0;
  for (Eigen::Index j = 0; j + 1 < n; ++j) {
    delta[j] = -((mean - counts.s[static_cast<std::size_t>(j)]) / total) * thresholds.gamma;
    head += delta[j];
  }
  delta[n - 1] = -head;
  return delta;
}

/// Gradient step toward equal filtered counts, then clamp. A step with no
/// confident pseudo-labels leaves the thresholds alone.
inline AdaptiveThresholds update_thresholds(AdaptiveThresholds thresholds, const BalanceCounts& counts) {
  if (counts.total() == 0.0) {
    if (static_cast<Eigen::Index>(counts.s.size()) != thresholds.tau.size())
      throw StructuralError("update_thresholds: count vector width mismatch");
    return thresholds;
  }
  const Vector delta = threshold_deltas(thresholds, counts);
  for (Eigen::Index j = 0; j < thresholds.tau.size(); ++j)
    thresholds.tau[j] = std::min(std::max(thresholds.tau[j] + delta[j], thresholds.lower), thresholds.upper);
  return thresholds;
}

/// d H(U; P) / d s_j in bits, where P is the normalized count vector and U
/// uniform: (s_j - mean) / (ln 2 * total * s_j).
inline double balance_ce_gradient(const BalanceCounts& counts, int j) {
  if (j < 0 || static_cast<std::size_t>(j) >= counts.s.size())
    throw DomainError("balance_ce_gradient: class index out of range");
  const double sj = counts.s[static_cast<std::size_t>(j)];
  if (!(sj > 0.0)) throw DomainError("balance_ce_gradient: s_j must be > 0");
  const double total = counts.total();
  const double mean = counts.mean();
  return (sj - mean) / (std::numbers::ln2 * total * sj);
}

}  // namespace concont
