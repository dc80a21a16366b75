// One ConCont training step and the epoch loop, with a switch for every
// ablation axis.
#pragma once

#include "concont/common.hpp"
#include "concont/consistency.hpp"
#include "concont/controller.hpp"
#include "concont/dataset.hpp"
#include "concont/evalkit.hpp"
#include "concont/network.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace concont {

enum class BranchMode { three, two };
enum class ThresholdMode { adaptive, fixed };

struct ThresholdConfig {
  std::optional<double> init;  // unset: 0.8 / 0.6 depending on class count
  std::optional<double> lower;
  std::optional<double> upper;
  double gamma = 1.0;
  double count_ema = 0.0;  // 0 = raw per-batch counts

  AdaptiveThresholds make(int n_classes) const {
    const auto d = AdaptiveThresholds::defaults_for(n_classes);
    return AdaptiveThresholds::uniform(n_classes, init.value_or(d.tau[0]), lower.value_or(d.lower),
                                       upper.value_or(d.upper), gamma);
  }
};

struct TrainConfig {
  int epochs = 200;
  int batch_size = 64;
  LossWeights weights;
  double base_lr = 0.01;
  double sgd_momentum = 0.9;
  double weight_decay = 1e-3;
  double twin_momentum = 0.999;
  ThresholdConfig thresholds;
  std::size_t queue_capacity = 512;
  AugmentConfig augment;
  std::optional<AugmentConfig> key_augment;  // separate key-view policy; three-branch only
  int hidden_width = 64;
  int hidden_layers = 2;
  int proj_dim = 16;

  bool use_unlabeled = true;
  BranchMode branch_mode = BranchMode::three;
  Strategy strategy = Strategy::ours;
  ThresholdMode threshold_mode = ThresholdMode::adaptive;
  PseudoMode pseudo_mode = PseudoMode::hard;
  bool disable_l_reg = false;
  bool disable_l_reg_prime = false;
  bool use_standard_ce = false;

  int partial_per_batch = 0;  // >0: fixed number of partial examples per batch
  int confidence_epoch = 50;  // epoch whose end-of-epoch confidence scores are kept; 0 = none
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0) throw ConfigError("TrainConfig: epochs must be >= 0");
    if (batch_size < 2) throw ConfigError("TrainConfig: batch_size must be >= 2");
    if (partial_per_batch < 0 || partial_per_batch > batch_size)
      throw ConfigError("TrainConfig: partial_per_batch must lie in [0, batch_size]");
    if (queue_capacity < static_cast<std::size_t>(batch_size))
      throw ConfigError("TrainConfig: queue_capacity must be >= batch_size");
    if (branch_mode == BranchMode::two && key_augment)
      throw ConfigError("TrainConfig: two-branch mode reuses the weak view for keys; a separate key augmentation is not allowed");
    if (thresholds.count_ema < 0.0 || thresholds.count_ema >= 1.0)
      throw ConfigError("TrainConfig: count_ema must lie in [0, 1)");
    weights.validate();
    augment.validate();
    if (key_augment) key_augment->validate();
  }
};

struct StepReport {
  long step = 0;
  int epoch = 0;
  double lr = 0.0;
  double l_part = 0.0;
  double l_reg = 0.0;
  double l_reg_prime = 0.0;
  double total = 0.0;
  std::vector<long> confident_counts;
  long confident_correct = 0;  // confident pseudo-labels matching the hidden label
  Vector thresholds;           // after this step's update
  long ignored = 0;
  long skipped = 0;
};

struct EpochRecord {
  int epoch = 0;
  double l_part = 0.0;
  double l_reg = 0.0;
  double l_reg_prime = 0.0;
  std::optional<double> test_accuracy;
  double pseudo_precision = 0.0;  // fraction of confident pseudo-labels that are correct
  std::vector<long> confident_counts;
  double balance_std = 0.0;
  Vector thresholds;
};

/// Per-example confidence measures on the clean training pool.
struct ConfidenceSnapshot {
  int epoch = 0;
  std::vector<double> p_score;
  std::vector<double> max_prob;
  std::vector<char> correct;  // pseudo-label == hidden label
};

struct TrainHistory {
  std::vector<StepReport> steps;
  std::vector<EpochRecord> epochs;
  std::optional<ConfidenceSnapshot> confidence;
};

struct TrainState {
  TrainConfig config;
  NetworkShape shape;
  MomentumPair nets;
  OptimizerState opt;
  AdaptiveThresholds thresholds;
  RepresentationQueue queue;
  std::vector<double> count_ema;
  long step = 0;
  int epoch = 0;

  static TrainState create(const TrainConfig& cfg, int input_dim, int n_classes, long total_steps) {
    cfg.validate();
    NetworkShape shape{input_dim, cfg.hidden_width, cfg.hidden_layers, n_classes, cfg.proj_dim};
    auto main = init_network(shape, mix_seed(cfg.seed, 0x11));
    auto opt = OptimizerState::for_params(main, cfg.base_lr, cfg.sgd_momentum, cfg.weight_decay,
                                          std::max(total_steps, 1L));
    return TrainState{cfg,
                      shape,
                      MomentumPair::from(std::move(main), cfg.twin_momentum),
                      std::move(opt),
                      cfg.thresholds.make(n_classes),
                      RepresentationQueue(cfg.queue_capacity, cfg.proj_dim),
                      std::vector<double>(static_cast<std::size_t>(n_classes), 0.0),
                      0,
                      0};
  }
};

/// Seeds of the independent random streams used inside one step.
enum class StepStream : std::uint64_t { weak = 1, strong = 2, key = 3, label_draw = 4 };

inline Rng step_rng(const TrainConfig& cfg, long step, StepStream stream) {
  return Rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(stream)));
}

/// Augments every example of the batch with one stream; columns are examples.
inline Matrix augment_batch(std::span<const Example* const> batch, AugmentKind kind, const AugmentConfig& cfg,
                            Rng& rng) {
  Matrix x(batch.front()->features.size(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i)
    x.col(static_cast<Eigen::Index>(i)) = augment(batch[i]->features, kind, cfg, rng);
  return x;
}

/// Detached quantities the objective treats as constants: controller
/// decisions, weak-branch targets, supervised targets and contrast sets.
struct FrozenTargets {
  std::vector<PseudoLabel> meta;
  Matrix weak_probs;                 // C x B, soft pseudo-label targets
  std::vector<int> ce_targets;       // standard-CE targets; empty for partial CE
  std::vector<ContrastSets> sets;    // one per batch item; empty when L_reg' is off
  const RepresentationQueue* queue = nullptr;
};

struct ObjectiveValue {
  double l_part = 0.0;  // batch means
  double l_reg = 0.0;
  double l_reg_prime = 0.0;
  double total = 0.0;
  long skipped = 0;
  std::optional<Gradients> grads;
};

/// Draws the standard-CE target of each example: the single candidate of a
/// one-hot mask, otherwise a uniformly chosen candidate.
inline std::vector<int> draw_ce_targets(std::span<const Example* const> batch, Rng& rng) {
  std::vector<int> out;
  out.reserve(batch.size());
  for (const auto* ex : batch) {
    const auto& mask = ex->candidate_mask;
    int target = mask.first();
    if (!mask.is_one_hot()) {
      std::uniform_int_distribution<int> pick(0, mask.count() - 1);
      int k = pick(rng);
      for (int j = 0; j < mask.size(); ++j)
        if (mask.test(j) && k-- == 0) {
          target = j;
          break;
        }
    }
    out.push_back(target);
  }
  return out;
}

/// Composite objective L_part + lambda * L_reg + mu * L_reg' averaged over
/// the batch, as a function of the main network's parameters with every
/// detached target held fixed. `x_strong` may be empty when both
/// consistency terms are disabled. A precomputed weak-branch cache for the
/// same parameters may be passed to skip one forward pass.
inline ObjectiveValue composite_objective(const NetworkParams& params, const TrainConfig& cfg,
                                          std::span<const Example* const> batch, const Matrix& x_weak,
                                          const Matrix& x_strong, const FrozenTargets& targets, bool with_grad,
                                          const ForwardCache* weak_cache = nullptr) {
  const bool use_reg = !cfg.disable_l_reg;
  const bool use_rep = !cfg.disable_l_reg_prime;
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto n_classes = params.classifier.weight.rows();

  std::optional<ForwardCache> own_weak;
  if (!weak_cache) own_weak = forward(params, x_weak, Heads{.classify = true, .project = false});
  const ForwardCache& weak = weak_cache ? *weak_cache : *own_weak;

  ObjectiveValue out;
  Matrix d_weak(n_classes, b);
  double sum_part = 0.0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& mask = batch[static_cast<std::size_t>(i)]->candidate_mask;
    const Vector pred = weak.probs.col(i);
    if (targets.ce_targets.empty()) {
      sum_part += partial_cross_entropy(pred, mask);
      if (with_grad) d_weak.col(i) = partial_cross_entropy_grad(pred, mask);
    } else {
      const int y = targets.ce_targets[static_cast<std::size_t>(i)];
      sum_part += cross_entropy(pred, y);
      if (with_grad) d_weak.col(i) = cross_entropy_grad(pred, y);
    }
  }

  std::optional<ForwardCache> strong;
  if (use_reg || use_rep) strong = forward(params, x_strong, Heads{.classify = use_reg, .project = use_rep});

  double sum_reg = 0.0;
  Matrix d_strong_logits;
  if (use_reg) {
    if (with_grad) d_strong_logits = Matrix::Zero(n_classes, b);
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto& m = targets.meta[static_cast<std::size_t>(i)];
      if (!m.confident) continue;
      const Vector ps = strong->probs.col(i);
      const Vector pw = targets.weak_probs.col(i);
      sum_reg += cfg.pseudo_mode == PseudoMode::hard ? neg_log_clamped(ps[m.class_index]) : kl_divergence(pw, ps);
      if (with_grad)
        d_strong_logits.col(i) = cfg.weights.lambda * label_consistency_grad(ps, m.class_index, cfg.pseudo_mode, pw);
    }
  }

  double sum_rep = 0.0;
  Matrix d_z;
  if (use_rep) {
    if (!targets.queue || targets.sets.size() != batch.size())
      throw StructuralError("composite_objective: contrast sets missing for the representation term");
    if (with_grad) d_z = Matrix::Zero(strong->z.rows(), b);
    for (Eigen::Index i = 0; i < b; ++i) {
      const auto& sets = targets.sets[static_cast<std::size_t>(i)];
      if (!sets.contributes) continue;
      if (sets.positives.empty()) {
        ++out.skipped;
        continue;
      }
      Vector g;
      sum_rep += contrastive_loss(strong->z.col(i), *targets.queue, sets, cfg.weights.temperature,
                                  with_grad ? &g : nullptr);
      if (with_grad) d_z.col(i) = cfg.weights.mu * g;
    }
  }

  const double inv_b = 1.0 / static_cast<double>(b);
  out.l_part = sum_part * inv_b;
  out.l_reg = sum_reg * inv_b;
  out.l_reg_prime = sum_rep * inv_b;
  LossWeights effective = cfg.weights;
  if (!use_reg) effective.lambda = 0.0;
  if (!use_rep) effective.mu = 0.0;
  out.total = total_loss(out.l_part, out.l_reg, out.l_reg_prime, effective);

  if (with_grad) {
    std::vector<BranchGrad> branches;
    branches.push_back(BranchGrad{&weak, std::move(d_weak), Matrix()});
    if (strong) branches.push_back(BranchGrad{&*strong, std::move(d_strong_logits), std::move(d_z)});
    out.grads = backward(params, branches);
  }
  return out;
}

/// One optimization step. Ordering: weak pass and controller decisions with
/// the current thresholds; strong pass; key pass; enqueue; selection; loss;
/// backward + SGD; momentum update; threshold update.
inline StepReport train_step(TrainState& state, std::span<const Example* const> batch) {
  if (batch.empty()) throw DomainError("train_step: empty batch");
  const auto& cfg = state.config;
  const int n_classes = state.shape.n_classes;
  const auto b = static_cast<Eigen::Index>(batch.size());
  const bool use_reg = !cfg.disable_l_reg;
  const bool use_rep = !cfg.disable_l_reg_prime;

  StepReport report;
  report.step = state.step;
  report.epoch = state.epoch;
  report.lr = state.opt.learning_rate();
  report.confident_counts.assign(static_cast<std::size_t>(n_classes), 0);

  // (1) weak branch, pseudo-labels, p-scores, confidence.
  Rng weak_rng = step_rng(cfg, state.step, StepStream::weak);
  const Matrix x_weak = augment_batch(batch, AugmentKind::weak, cfg.augment, weak_rng);
  const ForwardCache weak = forward(state.nets.main, x_weak, Heads{.classify = true, .project = false});
  if (!all_finite(weak.probs)) throw NumericError("train_step: nonfinite weak predictions");

  FrozenTargets targets;
  targets.meta.resize(batch.size());
  targets.weak_probs = weak.probs;
  for (Eigen::Index i = 0; i < b; ++i) {
    const auto& ex = *batch[static_cast<std::size_t>(i)];
    const Vector pred = weak.probs.col(i);
    const int pseudo = predict_pseudo_label(pred, ex.candidate_mask);
    const PScore score = compute_p_score(pred, ex.candidate_mask);
    const bool confident = is_confident(score, pseudo, state.thresholds);
    targets.meta[static_cast<std::size_t>(i)] = PseudoLabel{pseudo, confident};
    if (confident) {
      ++report.confident_counts[static_cast<std::size_t>(pseudo)];
      if (ex.true_label && *ex.true_label == pseudo) ++report.confident_correct;
    }
  }
  if (cfg.use_standard_ce) {
    Rng label_draw = step_rng(cfg, state.step, StepStream::label_draw);
    targets.ce_targets = draw_ce_targets(batch, label_draw);
  }

  // (2) strong view.
  Matrix x_strong;
  if (use_reg || use_rep) {
    Rng strong_rng = step_rng(cfg, state.step, StepStream::strong);
    x_strong = augment_batch(batch, AugmentKind::strong, cfg.augment, strong_rng);
  }

  // (3)-(5) keys from the momentum twin, enqueue, select contrast sets.
  if (use_rep) {
    Matrix x_key;
    if (cfg.branch_mode == BranchMode::three) {
      Rng key_rng = step_rng(cfg, state.step, StepStream::key);
      x_key = augment_batch(batch, AugmentKind::strong, cfg.key_augment.value_or(cfg.augment), key_rng);
    } else {
      x_key = x_weak;
    }
    const ForwardCache keys = forward(state.nets.twin, x_key, Heads{.classify = false, .project = true});
    if (!all_finite(keys.z)) throw NumericError("train_step: nonfinite momentum keys");
    for (Eigen::Index i = 0; i < b; ++i)
      state.queue.push(keys.z.col(i), targets.meta[static_cast<std::size_t>(i)].class_index,
                       targets.meta[static_cast<std::size_t>(i)].confident);
    targets.queue = &state.queue;
    targets.sets.reserve(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      targets.sets.push_back(select_contrast_sets(i, targets.meta, state.queue, cfg.strategy));
      report.ignored += static_cast<long>(targets.sets.back().ignored);
    }
  }

  // (6)-(7) objective, backward, SGD.
  ObjectiveValue obj = composite_objective(state.nets.main, cfg, batch, x_weak, x_strong, targets, true, &weak);
  report.l_part = obj.l_part;
  report.l_reg = obj.l_reg;
  report.l_reg_prime = obj.l_reg_prime;
  report.total = obj.total;
  report.skipped = obj.skipped;
  sgd_step(state.nets.main, *obj.grads, state.opt);

  // (8) momentum twin.
  momentum_update(state.nets);

  // (9) thresholds.
  if (cfg.threshold_mode == ThresholdMode::adaptive) {
    BalanceCounts counts;
    counts.s.resize(static_cast<std::size_t>(n_classes));
    const double beta = cfg.thresholds.count_ema;
    for (std::size_t j = 0; j < counts.s.size(); ++j) {
      const double raw = static_cast<double>(report.confident_counts[j]);
      if (beta > 0.0) {
        state.count_ema[j] = beta * state.count_ema[j] + (1.0 - beta) * raw;
        counts.s[j] = state.count_ema[j];
      } else {
        counts.s[j] = raw;
      }
    }
    state.thresholds = update_thresholds(state.thresholds, counts);
  }
  report.thresholds = state.thresholds.tau;
  ++state.step;
  return report;
}

/// Deterministic batch schedule for one epoch over the pooled data.
inline std::vector<std::vector<const Example*>> epoch_batches(const TrainConfig& cfg,
                                                              std::span<const Example* const> partial,
                                                              std::span<const Example* const> unlabeled,
                                                              int epoch) {
  Rng rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0xe90c));
  std::vector<std::vector<const Example*>> batches;
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  if (cfg.partial_per_batch > 0 && !partial.empty() && !unlabeled.empty()) {
    std::vector<const Example*> p(partial.begin(), partial.end());
    std::vector<const Example*> u(unlabeled.begin(), unlabeled.end());
    std::shuffle(p.begin(), p.end(), rng);
    std::shuffle(u.begin(), u.end(), rng);
    const std::size_t n_steps = (p.size() + u.size() + bs - 1) / bs;
    const auto kp = static_cast<std::size_t>(cfg.partial_per_batch);
    std::size_t ip = 0, iu = 0;
    for (std::size_t s = 0; s < n_steps; ++s) {
      std::vector<const Example*> batch;
      for (std::size_t k = 0; k < kp; ++k) batch.push_back(p[ip++ % p.size()]);
      for (std::size_t k = kp; k < bs; ++k) batch.push_back(u[iu++ % u.size()]);
      batches.push_back(std::move(batch));
    }
    return batches;
  }

  std::vector<const Example*> pool(partial.begin(), partial.end());
  pool.insert(pool.end(), unlabeled.begin(), unlabeled.end());
  std::shuffle(pool.begin(), pool.end(), rng);
  for (std::size_t start = 0; start < pool.size(); start += bs) {
    const std::size_t end = std::min(pool.size(), start + bs);
    if (end - start < 2) break;  // a singleton tail batch is dropped
    batches.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(start), pool.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

/// p-score and max masked probability for every example on clean features.
inline ConfidenceSnapshot confidence_snapshot(const NetworkParams& params, std::span<const Example* const> pool,
                                              int epoch) {
  ConfidenceSnapshot snap;
  snap.epoch = epoch;
  if (pool.empty()) return snap;
  Matrix x(pool.front()->features.size(), static_cast<Eigen::Index>(pool.size()));
  for (std::size_t i = 0; i < pool.size(); ++i) x.col(static_cast<Eigen::Index>(i)) = pool[i]->features;
  const auto cache = forward(params, x, Heads{});
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const Vector pred = cache.probs.col(static_cast<Eigen::Index>(i));
    const auto& mask = pool[i]->candidate_mask;
    const int pseudo = predict_pseudo_label(pred, mask);
    snap.p_score.push_back(compute_p_score(pred, mask).total);
    snap.max_prob.push_back(pred[pseudo]);
    snap.correct.push_back(pool[i]->true_label && *pool[i]->true_label == pseudo ? 1 : 0);
  }
  return snap;
}

struct TrainResult {
  MomentumPair nets;
  NetworkShape shape;
  TrainHistory history;
};

using StepObserver = std::function<void(const StepReport&)>;

/// Full training run; deterministic for a fixed config (including seed).
/// Examples whose mask is all-ones are treated as unlabeled.
inline TrainResult train_loop(const TrainConfig& cfg, std::span<const Example> train,
                              std::span<const Example> test = {}, const StepObserver& observer = {}) {
  cfg.validate();
  if (train.empty()) throw ConfigError("train_loop: empty training corpus");
  const int input_dim = static_cast<int>(train.front().features.size());
  const int n_classes = train.front().candidate_mask.size();

  std::vector<const Example*> partial, unlabeled;
  for (const auto& ex : train) {
    if (ex.features.size() != input_dim || ex.candidate_mask.size() != n_classes)
      throw StructuralError("train_loop: ragged corpus");
    (ex.is_unlabeled() ? unlabeled : partial).push_back(&ex);
  }
  if (!cfg.use_unlabeled) unlabeled.clear();
  if (partial.empty() && unlabeled.empty()) throw ConfigError("train_loop: nothing to train on");

  // Count steps up front for the cosine schedule.
  long total_steps = 0;
  for (int e = 0; e < cfg.epochs; ++e) total_steps += static_cast<long>(epoch_batches(cfg, partial, unlabeled, e).size());

  TrainState state = TrainState::create(cfg, input_dim, n_classes, total_steps);
  TrainHistory history;
  std::vector<const Example*> pool(partial);
  pool.insert(pool.end(), unlabeled.begin(), unlabeled.end());

  for (int e = 0; e < cfg.epochs; ++e) {
    state.epoch = e;
    EpochRecord rec;
    rec.epoch = e;
    rec.confident_counts.assign(static_cast<std::size_t>(n_classes), 0);
    long n_steps = 0, conf_total = 0, conf_correct = 0;
    for (const auto& batch : epoch_batches(cfg, partial, unlabeled, e)) {
      StepReport r = train_step(state, batch);
      rec.l_part += r.l_part;
      rec.l_reg += r.l_reg;
      rec.l_reg_prime += r.l_reg_prime;
      for (std::size_t j = 0; j < rec.confident_counts.size(); ++j) {
        rec.confident_counts[j] += r.confident_counts[j];
        conf_total += r.confident_counts[j];
      }
      conf_correct += r.confident_correct;
      ++n_steps;
      if (observer) observer(r);
      history.steps.push_back(std::move(r));
    }
    if (n_steps > 0) {
      rec.l_part /= static_cast<double>(n_steps);
      rec.l_reg /= static_cast<double>(n_steps);
      rec.l_reg_prime /= static_cast<double>(n_steps);
    }
    rec.pseudo_precision = conf_total > 0 ? static_cast<double>(conf_correct) / static_cast<double>(conf_total) : 0.0;
    rec.balance_std = balance_stats(rec.confident_counts).std;
    rec.thresholds = state.thresholds.tau;
    if (!test.empty()) rec.test_accuracy = accuracy(state.nets.main, test);
    history.epochs.push_back(std::move(rec));
    if (cfg.confidence_epoch > 0 && e + 1 == cfg.confidence_epoch)
      history.confidence = confidence_snapshot(state.nets.main, pool, e + 1);
  }
  return TrainResult{std::move(state.nets), state.shape, std::move(history)};
}

// ---------------------------------------------------------------------------
// JSON-lines metrics

inline std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

inline nlohmann::json to_json(const StepReport& r) {
  return {{"type", "step"},
          {"step", r.step},
          {"epoch", r.epoch},
          {"lr", r.lr},
          {"l_part", r.l_part},
          {"l_reg", r.l_reg},
          {"l_reg_prime", r.l_reg_prime},
          {"total", r.total},
          {"confident_counts", r.confident_counts},
          {"confident_correct", r.confident_correct},
          {"thresholds", to_std(r.thresholds)},
          {"ignored", r.ignored},
          {"skipped", r.skipped}};
}

inline nlohmann::json to_json(const EpochRecord& r) {
  nlohmann::json j = {{"type", "epoch"},
                      {"epoch", r.epoch},
                      {"l_part", r.l_part},
                      {"l_reg", r.l_reg},
                      {"l_reg_prime", r.l_reg_prime},
                      {"pseudo_precision", r.pseudo_precision},
                      {"confident_counts", r.confident_counts},
                      {"balance_std", r.balance_std},
                      {"thresholds", to_std(r.thresholds)}};
  j["test_accuracy"] = r.test_accuracy ? nlohmann::json(*r.test_accuracy) : nlohmann::json(nullptr);
  return j;
}

inline nlohmann::json to_json(const ConfidenceSnapshot& s) {
  return {{"type", "confidence"},
          {"epoch", s.epoch},
          {"p_score", s.p_score},
          {"max_prob", s.max_prob},
          {"correct", std::vector<int>(s.correct.begin(), s.correct.end())}};
}

/// Steps and epoch records interleaved in training order, then the
/// confidence snapshot if one was taken.
inline void write_metrics_jsonl(std::ostream& os, const TrainHistory& h) {
  std::size_t s = 0;
  for (const auto& rec : h.epochs) {
    while (s < h.steps.size() && h.steps[s].epoch <= rec.epoch) os << to_json(h.steps[s++]).dump() << '\n';
    os << to_json(rec).dump() << '\n';
  }
  while (s < h.steps.size()) os << to_json(h.steps[s++]).dump() << '\n';
  if (h.confidence) os << to_json(*h.confidence).dump() << '\n';
}

}  // namespace concont
