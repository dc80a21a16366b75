// Evaluation: test accuracy, confidence P-R curves and class-balance stats.
#pragma once

#include "concont/common.hpp"
#include "concont/dataset.hpp"
#include "concont/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

namespace concont {

/// Stacks feature vectors as columns.
inline Matrix feature_matrix(std::span<const Example> examples) {
  if (examples.empty()) return Matrix();
  Matrix x(examples.front().features.size(), static_cast<Eigen::Index>(examples.size()));
  for (std::size_t i = 0; i < examples.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = examples[i].features;
  return x;
}

/// Argmax class per example on clean features; ties go to the lowest index.
inline std::vector<int> predict_labels(const NetworkParams& params, std::span<const Example> examples) {
  std::vector<int> out;
  if (examples.empty()) return out;
  const auto cache = forward(params, feature_matrix(examples), Heads{});
  out.reserve(examples.size());
  for (Eigen::Index c = 0; c < cache.probs.cols(); ++c) {
    Eigen::Index arg = 0;
    cache.probs.col(c).maxCoeff(&arg);
    out.push_back(static_cast<int>(arg));
  }
  return out;
}

inline double accuracy(const NetworkParams& params, std::span<const Example> test) {
  if (test.empty()) throw DomainError("accuracy: empty test set");
  const auto pred = predict_labels(params, test);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < test.size(); ++i) {
    if (!test[i].true_label) throw DomainError("accuracy: test example without true_label");
    if (pred[i] == *test[i].true_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

struct PRPoint {
  double threshold = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  std::size_t support = 0;  // number of selected items
};

/// Sweeps thresholds over score quantiles; an item is selected when its
/// score is >= the threshold. Duplicate thresholds collapse to one point.
inline std::vector<PRPoint> pr_curve(std::span<const double> scores, std::span<const char> correct,
                                     std::size_t n_points) {
  if (scores.size() != correct.size()) throw DomainError("pr_curve: score and label lists differ in length");
  if (scores.empty()) throw DomainError("pr_curve: empty input");
  if (n_points < 1) throw DomainError("pr_curve: n_points must be positive");
  std::vector<double> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const auto positives = static_cast<std::size_t>(std::count_if(correct.begin(), correct.end(), [](char c) { return c != 0; }));

  std::vector<double> thresholds;
  for (std::size_t k = 0; k < n_points; ++k) {
    const std::size_t pos = n_points == 1 ? 0 : k * (n - 1) / (n_points - 1);
    if (thresholds.empty() || sorted[pos] != thresholds.back()) thresholds.push_back(sorted[pos]);
  }

  std::vector<PRPoint> points;
  for (double thr : thresholds) {
    std::size_t selected = 0, hit = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (scores[i] >= thr) {
        ++selected;
        if (correct[i]) ++hit;
      }
    }
    if (selected == 0) continue;
    PRPoint p;
    p.threshold = thr;
    p.support = selected;
    p.precision = static_cast<double>(hit) / static_cast<double>(selected);
    p.recall = positives == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(positives);
    points.push_back(p);
  }
  return points;
}

/// Interpolated precision: best precision among points with recall >= r.
inline std::optional<double> precision_at_recall(std::span<const PRPoint> curve, double r) {
  std::optional<double> best;
  for (const auto& p : curve)
    if (p.recall >= r && (!best || p.precision > *best)) best = p.precision;
  return best;
}

/// Area under the interpolated P-R curve over recall in [0, 1].
inline double pr_auc(std::span<const PRPoint> curve) {
  std::vector<PRPoint> pts(curve.begin(), curve.end());
  std::sort(pts.begin(), pts.end(), [](const PRPoint& a, const PRPoint& b) { return a.recall < b.recall; });
  double area = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    // Interpolated precision is constant on (prev_recall, pts[i].recall].
    double best = 0.0;
    for (std::size_t k = i; k < pts.size(); ++k) best = std::max(best, pts[k].precision);
    area += (pts[i].recall - prev_recall) * best;
    prev_recall = pts[i].recall;
  }
  return area;
}

struct BalanceStats {
  std::vector<long> per_class_counts;
  double std = 0.0;
  double max_min_ratio = 1.0;  // +inf when some class has zero count
};

/// Population std and max/min ratio of per-class counts.
inline BalanceStats balance_stats(std::span<const long> counts) {
  if (counts.size() < 2) throw DomainError("balance_stats: need at least two classes");
  BalanceStats b;
  b.per_class_counts.assign(counts.begin(), counts.end());
  const double n = static_cast<double>(counts.size());
  const double mean = std::accumulate(counts.begin(), counts.end(), 0.0) / n;
  double var = 0.0;
  for (long c : counts) var += (static_cast<double>(c) - mean) * (static_cast<double>(c) - mean);
  b.std = std::sqrt(var / n);
  const auto [mn, mx] = std::minmax_element(counts.begin(), counts.end());
  if (*mx == 0) {
    b.max_min_ratio = 1.0;
  } else if (*mn == 0) {
    b.max_min_ratio = std::numeric_limits<double>::infinity();
  } else {
    b.max_min_ratio = static_cast<double>(*mx) / static_cast<double>(*mn);
  }
  return b;
}

inline void write_pr_csv(std::ostream& os, std::span<const PRPoint> curve) {
  os << "threshold,precision,recall,support\n";
  os.precision(17);
  for (const auto& p : curve) os << p.threshold << ',' << p.precision << ',' << p.recall << ',' << p.support << '\n';
}

inline void write_balance_csv(std::ostream& os, std::span<const long> counts) {
  os << "class,count\n";
  for (std::size_t j = 0; j < counts.size(); ++j) os << j << ',' << counts[j] << '\n';
}

}  // namespace concont
