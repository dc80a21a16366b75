// Training losses (partial cross-entropy, gated label consistency,
// controller-selected contrastive loss), the composite objective, the key
// representation queue and the positive/negative selection strategies.
//
// Loss gradients are returned with respect to classifier logits or the
// normalized projection, which is what network::backward consumes.
#pragma once

#include "concont/common.hpp"
#include "concont/controller.hpp"
#include "concont/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace concont {

// ---------------------------------------------------------------------------
// Label-level losses

/// -ln(sum of predicted mass on the candidates). Exactly 0 for all-ones masks.
inline double partial_cross_entropy(const Vector& pred, const LabelMask& mask) {
  if (pred.size() != mask.size()) throw StructuralError("partial_cross_entropy: width mismatch");
  if (mask.none()) throw DomainError("partial_cross_entropy: empty candidate mask");
  if (mask.all()) return 0.0;
  double mass = 0.0;
  for (int j = 0; j < mask.size(); ++j)
    if (mask.test(j)) mass += pred[j];
  return neg_log_clamped(mass);
}

/// Gradient of partial_cross_entropy w.r.t. the logits: p_k - [k in Y] p_k / S.
inline Vector partial_cross_entropy_grad(const Vector& pred, const LabelMask& mask) {
  Vector g = Vector::Zero(pred.size());
  if (mask.all()) return g;
  double mass = 0.0;
  for (int j = 0; j < mask.size(); ++j)
    if (mask.test(j)) mass += pred[j];
  if (!(mass > kLogFloor)) return g;
  for (int k = 0; k < mask.size(); ++k) g[k] = pred[k] - (mask.test(k) ? pred[k] / mass : 0.0);
  return g;
}

/// Plain cross-entropy against one class, -ln p_y.
inline double cross_entropy(const Vector& pred, int label) { return neg_log_clamped(pred[label]); }

inline Vector cross_entropy_grad(const Vector& pred, int label) {
  Vector g = pred;
  if (!(pred[label] > kLogFloor)) return Vector::Zero(pred.size());
  g[label] -= 1.0;
  return g;
}

enum class PseudoMode { hard, soft };

/// KL(target || pred) with ln clamped at kLogFloor; zero-mass target entries drop out.
inline double kl_divergence(const Vector& target, const Vector& pred) {
  double kl = 0.0;
  for (Eigen::Index j = 0; j < target.size(); ++j) {
    if (target[j] <= 0.0) continue;
    kl += target[j] * (std::log(std::max(target[j], kLogFloor)) + neg_log_clamped(pred[j]));
  }
  return std::max(kl, 0.0);
}

/// Confidence-gated consistency between the strong-view prediction and the
/// weak-view pseudo-label (hard) or distribution (soft). The weak branch is a
/// fixed target.
inline double label_consistency_loss(const Vector& pred_strong, int pseudo, const PScore& score,
                                     const AdaptiveThresholds& thresholds, PseudoMode mode,
                                     const Vector& pred_weak) {
  if (!is_confident(score, pseudo, thresholds)) return 0.0;
  if (mode == PseudoMode::hard) return neg_log_clamped(pred_strong[pseudo]);
  return kl_divergence(pred_weak, pred_strong);
}

/// Gradient of the ungated consistency term w.r.t. strong-view logits.
/// Callers apply the confidence gate themselves.
inline Vector label_consistency_grad(const Vector& pred_strong, int pseudo, PseudoMode mode,
                                     const Vector& pred_weak) {
  if (mode == PseudoMode::hard) return cross_entropy_grad(pred_strong, pseudo);
  // d/dlogits sum_j w_j (ln w_j - ln s_j) = s - w (w sums to one).
  return pred_strong - pred_weak;
}

// ---------------------------------------------------------------------------
// Representation queue

struct QueueEntry {
  Vector key_rep;
  int pseudo_class = 0;
  bool confident = false;
};

/// FIFO of unit-norm key representations backed by a ring buffer. Logical
/// index 0 is the oldest entry.
class RepresentationQueue {
 public:
  RepresentationQueue(std::size_t capacity, int proj_dim)
      : capacity_(capacity), keys_(Matrix::Zero(proj_dim, static_cast<Eigen::Index>(capacity))),
        classes_(capacity, 0), confident_(capacity, 0) {
    if (capacity == 0) throw ConfigError("RepresentationQueue: capacity must be positive");
    if (proj_dim < 1) throw ConfigError("RepresentationQueue: proj_dim must be positive");
  }

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const { return size_; }
  bool empty() const { return size_ == 0; }
  int proj_dim() const { return static_cast<int>(keys_.rows()); }

  void push(const Vector& key, int pseudo_class, bool confident) {
    if (key.size() != keys_.rows()) throw StructuralError("RepresentationQueue: key width mismatch");
    if (std::abs(key.norm() - 1.0) > 1e-9) throw DomainError("RepresentationQueue: key is not unit-norm");
    std::size_t slot;
    if (size_ < capacity_) {
      slot = (head_ + size_) % capacity_;
      ++size_;
    } else {
      slot = head_;
      head_ = (head_ + 1) % capacity_;
    }
    keys_.col(static_cast<Eigen::Index>(slot)) = key;
    classes_[slot] = pseudo_class;
    confident_[slot] = confident ? 1 : 0;
  }
  void push(const QueueEntry& e) { push(e.key_rep, e.pseudo_class, e.confident); }

  std::size_t physical(std::size_t logical) const { return (head_ + logical) % capacity_; }

  auto key(std::size_t logical) const { return keys_.col(static_cast<Eigen::Index>(physical(logical))); }
  int pseudo_class(std::size_t logical) const { return classes_[physical(logical)]; }
  bool confident(std::size_t logical) const { return confident_[physical(logical)] != 0; }

  QueueEntry entry(std::size_t logical) const {
    return QueueEntry{Vector(key(logical)), pseudo_class(logical), confident(logical)};
  }

  /// Raw storage; columns beyond size() hold stale zeros or evicted keys.
  const Matrix& storage() const { return keys_; }

 private:
  std::size_t capacity_;
  Matrix keys_;
  std::vector<int> classes_;
  std::vector<char> confident_;
  std::size_t head_ = 0;
  std::size_t size_ = 0;
};

inline RepresentationQueue enqueue(RepresentationQueue queue, std::span<const QueueEntry> entries) {
  for (const auto& e : entries) queue.push(e);
  return queue;
}

// ---------------------------------------------------------------------------
// Positive / negative selection

enum class Strategy { ours, hcp, hcpn, supcon, unsupcon };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::ours: return "ours";
    case Strategy::hcp: return "hcp";
    case Strategy::hcpn: return "hcpn";
    case Strategy::supcon: return "supcon";
    case Strategy::unsupcon: return "unsupcon";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view s) {
  for (auto v : {Strategy::ours, Strategy::hcp, Strategy::hcpn, Strategy::supcon, Strategy::unsupcon})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

/// Queue positions (logical indices) of the selected positives and negatives.
struct ContrastSets {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;
  std::size_t ignored = 0;   // same-class entries dropped by Strategy::ours
  bool contributes = true;   // false when the strategy excludes this input
};

/// Selects contrast sets for batch item `batch_index`. The queue must already
/// hold the batch's own keys as its newest batch_meta.size() entries.
inline ContrastSets select_contrast_sets(std::size_t batch_index, std::span<const PseudoLabel> batch_meta,
                                         const RepresentationQueue& queue, Strategy strategy) {
  if (batch_index >= batch_meta.size()) throw DomainError("select_contrast_sets: batch index out of range");
  if (queue.size() < batch_meta.size())
    throw StructuralError("select_contrast_sets: queue does not hold the batch's keys");
  const std::size_t own = queue.size() - batch_meta.size() + batch_index;
  const auto& input = batch_meta[batch_index];

  ContrastSets sets;
  if (strategy == Strategy::hcpn && !input.confident) {
    sets.contributes = false;
    return sets;
  }
  for (std::size_t e = 0; e < queue.size(); ++e) {
    const bool same = queue.pseudo_class(e) == input.class_index;
    const bool conf = queue.confident(e);
    if (e == own) {
      sets.positives.push_back(e);
      continue;
    }
    switch (strategy) {
      case Strategy::ours:
        if (!same) {
          sets.negatives.push_back(e);
        } else if (input.confident && conf) {
          sets.positives.push_back(e);
        } else {
          ++sets.ignored;
        }
        break;
      case Strategy::hcp:
        if (input.confident && same && conf) {
          sets.positives.push_back(e);
        } else {
          sets.negatives.push_back(e);
        }
        break;
      case Strategy::hcpn:
        if (!conf) break;
        (same ? sets.positives : sets.negatives).push_back(e);
        break;
      case Strategy::supcon:
        (same ? sets.positives : sets.negatives).push_back(e);
        break;
      case Strategy::unsupcon:
        sets.negatives.push_back(e);
        break;
    }
  }
  return sets;
}

// ---------------------------------------------------------------------------
// Contrastive loss

/// Loss over explicit similarity lists (z . key for each positive and
/// negative). Every positive shares the denominator over P and N.
/// Returns the loss and, via `weights`, dL/d(similarity) per entry
/// (positives first, then negatives).
inline double contrastive_from_similarities(std::span<const double> pos_sim, std::span<const double> neg_sim,
                                            double t, std::vector<double>* weights = nullptr) {
  if (pos_sim.empty()) throw DomainError("contrastive_loss: empty positive set");
  if (!(t > 0.0)) throw ConfigError("contrastive_loss: temperature must be > 0");
  double mx = -std::numeric_limits<double>::infinity();
  for (double s : pos_sim) mx = std::max(mx, s / t);
  for (double s : neg_sim) mx = std::max(mx, s / t);
  double denom = 0.0;
  for (double s : pos_sim) denom += std::exp(s / t - mx);
  for (double s : neg_sim) denom += std::exp(s / t - mx);
  const double log_denom = mx + std::log(denom);

  const double n_pos = static_cast<double>(pos_sim.size());
  double loss = 0.0;
  for (double s : pos_sim) loss -= (s / t - log_denom);
  loss /= n_pos;

  if (weights) {
    weights->clear();
    weights->reserve(pos_sim.size() + neg_sim.size());
    for (double s : pos_sim) weights->push_back((std::exp(s / t - log_denom) - 1.0 / n_pos) / t);
    for (double s : neg_sim) weights->push_back(std::exp(s / t - log_denom) / t);
  }
  return std::max(loss, 0.0);
}

/// Loss for query z against explicit positive and negative keys.
inline double contrastive_loss(const Vector& z, std::span<const Vector> positives, std::span<const Vector> negatives,
                               double t, Vector* grad = nullptr) {
  std::vector<double> ps, ns;
  for (const auto& p : positives) ps.push_back(z.dot(p));
  for (const auto& n : negatives) ns.push_back(z.dot(n));
  std::vector<double> w;
  const double loss = contrastive_from_similarities(ps, ns, t, grad ? &w : nullptr);
  if (grad) {
    *grad = Vector::Zero(z.size());
    std::size_t k = 0;
    for (const auto& p : positives) *grad += w[k++] * p;
    for (const auto& n : negatives) *grad += w[k++] * n;
  }
  return loss;
}

/// Loss for query z against sets selected from the queue. Keys are constants.
inline double contrastive_loss(const Vector& z, const RepresentationQueue& queue, const ContrastSets& sets, double t,
                               Vector* grad = nullptr) {
  std::vector<double> ps, ns;
  ps.reserve(sets.positives.size());
  ns.reserve(sets.negatives.size());
  for (auto e : sets.positives) ps.push_back(z.dot(queue.key(e)));
  for (auto e : sets.negatives) ns.push_back(z.dot(queue.key(e)));
  std::vector<double> w;
  const double loss = contrastive_from_similarities(ps, ns, t, grad ? &w : nullptr);
  if (grad) {
    *grad = Vector::Zero(z.size());
    std::size_t k = 0;
    for (auto e : sets.positives) grad->noalias() += w[k++] * queue.key(e);
    for (auto e : sets.negatives) grad->noalias() += w[k++] * queue.key(e);
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Composite objective

struct LossWeights {
  double lambda = 1.0;
  double mu = 0.1;
  double temperature = 0.1;

  void validate() const {
    if (!(lambda >= 0.0) || !(mu >= 0.0)) throw ConfigError("LossWeights: lambda and mu must be >= 0");
    if (!(temperature > 0.0)) throw ConfigError("LossWeights: temperature must be > 0");
  }
};

inline double total_loss(double l_part, double l_reg, double l_reg_prime, const LossWeights& w) {
  if (!std::isfinite(l_part)) throw NumericError("total_loss: nonfinite l_part");
  if (!std::isfinite(l_reg)) throw NumericError("total_loss: nonfinite l_reg");
  if (!std::isfinite(l_reg_prime)) throw NumericError("total_loss: nonfinite l_reg_prime");
  return l_part + w.lambda * l_reg + w.mu * l_reg_prime;
}

}  // namespace concont
