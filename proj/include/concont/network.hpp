// Feed-forward encoder with classifier and projection heads, hand-written
// backpropagation, SGD with momentum and a cosine schedule, and the momentum
// twin used for key representations.
#pragma once

#include "concont/common.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace concont {

struct NetworkShape {
  int input_dim = 8;
  int hidden_width = 64;
  int hidden_layers = 2;
  int n_classes = 4;
  int proj_dim = 16;

  void validate() const {
    if (input_dim < 1 || hidden_width < 1 || hidden_layers < 1 || n_classes < 2 || proj_dim < 1)
      throw ConfigError("NetworkShape: all dimensions must be positive, n_classes >= 2");
  }
  friend bool operator==(const NetworkShape&, const NetworkShape&) = default;
};

/// Affine layer; bias is stored as an (out x 1) matrix so every tensor is a Matrix.
struct Dense {
  Matrix weight;
  Matrix bias;
};

struct NetworkParams {
  std::vector<Dense> encoder;     // input -> hidden, tanh after each layer
  Dense classifier;               // hidden -> C logits; empty in a momentum twin
  std::vector<Dense> projection;  // hidden -> hidden (tanh) -> proj_dim

  bool has_classifier() const { return classifier.weight.size() > 0; }

  /// (name, tensor) pairs in a fixed order. The key path skips the classifier.
  std::vector<std::pair<std::string, Matrix*>> tensors(bool key_path_only = false) {
    std::vector<std::pair<std::string, Matrix*>> out;
    collect(*this, out, key_path_only);
    return out;
  }
  std::vector<std::pair<std::string, const Matrix*>> tensors(bool key_path_only = false) const {
    std::vector<std::pair<std::string, const Matrix*>> out;
    collect(*this, out, key_path_only);
    return out;
  }

  /// Same shapes, all zeros.
  NetworkParams zeros_like() const {
    NetworkParams z = *this;
    for (auto& [name, t] : z.tensors()) t->setZero();
    return z;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors()) n += static_cast<std::size_t>(t->size());
    return n;
  }

 private:
  template <typename Self, typename Out>
  static void collect(Self& self, Out& out, bool key_path_only) {
    for (std::size_t l = 0; l < self.encoder.size(); ++l) {
      out.emplace_back("encoder." + std::to_string(l) + ".weight", &self.encoder[l].weight);
      out.emplace_back("encoder." + std::to_string(l) + ".bias", &self.encoder[l].bias);
    }
    if (!key_path_only && self.has_classifier()) {
      out.emplace_back("classifier.weight", &self.classifier.weight);
      out.emplace_back("classifier.bias", &self.classifier.bias);
    }
    for (std::size_t l = 0; l < self.projection.size(); ++l) {
      out.emplace_back("projection." + std::to_string(l) + ".weight", &self.projection[l].weight);
      out.emplace_back("projection." + std::to_string(l) + ".bias", &self.projection[l].bias);
    }
  }
};

using Gradients = NetworkParams;

/// Weights ~ U(-a, a) with a = sqrt(3 / fan_in); biases zero.
inline NetworkParams init_network(const NetworkShape& shape, std::uint64_t seed) {
  shape.validate();
  Rng rng(mix_seed(seed, 0x1417));
  auto layer = [&](int in, int out) {
    const double a = std::sqrt(3.0 / in);
    std::uniform_real_distribution<double> u(-a, a);
    Dense d{Matrix(out, in), Matrix::Zero(out, 1)};
    for (Eigen::Index i = 0; i < d.weight.size(); ++i) d.weight.data()[i] = u(rng);
    return d;
  };
  NetworkParams p;
  int in = shape.input_dim;
  for (int l = 0; l < shape.hidden_layers; ++l) {
    p.encoder.push_back(layer(in, shape.hidden_width));
    in = shape.hidden_width;
  }
  p.classifier = layer(shape.hidden_width, shape.n_classes);
  p.projection.push_back(layer(shape.hidden_width, shape.hidden_width));
  p.projection.push_back(layer(shape.hidden_width, shape.proj_dim));
  return p;
}

inline NetworkShape shape_of(const NetworkParams& p) {
  if (p.encoder.empty() || p.projection.size() != 2) throw StructuralError("shape_of: malformed parameters");
  NetworkShape s;
  s.input_dim = static_cast<int>(p.encoder.front().weight.cols());
  s.hidden_width = static_cast<int>(p.encoder.front().weight.rows());
  s.hidden_layers = static_cast<int>(p.encoder.size());
  s.n_classes = p.has_classifier() ? static_cast<int>(p.classifier.weight.rows()) : 0;
  s.proj_dim = static_cast<int>(p.projection.back().weight.rows());
  return s;
}

/// Which heads a forward pass evaluates.
struct Heads {
  bool classify = true;
  bool project = false;
};

/// Everything backward needs. Columns are examples.
struct ForwardCache {
  std::vector<Matrix> activations;  // [0] = input, [l+1] = tanh output of encoder layer l
  Matrix probs;                     // C x B softmax output (classify head)
  Matrix proj_hidden;               // tanh output of the first projection layer
  Matrix proj_raw;                  // pre-normalization projection
  Vector proj_norm;                 // ||proj_raw|| per column
  Matrix z;                         // normalized projection
  std::vector<char> degenerate;     // column had a zero projection
  bool classified = false;
  bool projected = false;

  Eigen::Index batch_size() const { return activations.empty() ? 0 : activations.front().cols(); }
  const Matrix& hidden() const { return activations.back(); }
};

/// Column-wise softmax with max subtraction.
inline Matrix softmax_columns(const Matrix& logits) {
  Matrix out(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double m = logits.col(c).maxCoeff();
    out.col(c) = (logits.col(c).array() - m).exp().matrix();
    out.col(c) /= out.col(c).sum();
  }
  return out;
}

/// Batched forward pass; X is d x B.
inline ForwardCache forward(const NetworkParams& params, const Matrix& inputs, Heads heads) {
  if (params.encoder.empty()) throw StructuralError("forward: network has no encoder");
  if (inputs.rows() != params.encoder.front().weight.cols())
    throw StructuralError("forward: input has " + std::to_string(inputs.rows()) +
                          " features, network expects " +
                          std::to_string(params.encoder.front().weight.cols()));
  ForwardCache cache;
  cache.activations.reserve(params.encoder.size() + 1);
  cache.activations.push_back(inputs);
  for (const auto& layer : params.encoder) {
    Matrix pre = layer.weight * cache.activations.back();
    pre.colwise() += layer.bias.col(0);
    cache.activations.push_back(pre.array().tanh().matrix());
  }
  const Matrix& h = cache.hidden();

  if (heads.classify) {
    if (!params.has_classifier()) throw StructuralError("forward: network has no classifier head");
    Matrix logits = params.classifier.weight * h;
    logits.colwise() += params.classifier.bias.col(0);
    cache.probs = softmax_columns(logits);
    cache.classified = true;
  }
  if (heads.project) {
    if (params.projection.size() != 2) throw StructuralError("forward: projection head must have 2 layers");
    Matrix pre = params.projection[0].weight * h;
    pre.colwise() += params.projection[0].bias.col(0);
    cache.proj_hidden = pre.array().tanh().matrix();
    cache.proj_raw = params.projection[1].weight * cache.proj_hidden;
    cache.proj_raw.colwise() += params.projection[1].bias.col(0);
    cache.proj_norm = cache.proj_raw.colwise().norm().transpose();
    if (!cache.proj_norm.allFinite()) throw NumericError("forward: nonfinite projection norm");
    cache.z = Matrix::Zero(cache.proj_raw.rows(), cache.proj_raw.cols());
    cache.degenerate.assign(static_cast<std::size_t>(cache.proj_raw.cols()), 0);
    for (Eigen::Index c = 0; c < cache.proj_raw.cols(); ++c) {
      if (cache.proj_norm[c] > 0.0) {
        cache.z.col(c) = cache.proj_raw.col(c) / cache.proj_norm[c];
      } else {
        cache.z(0, c) = 1.0;
        cache.degenerate[static_cast<std::size_t>(c)] = 1;
        warn(Warning::zero_projection);
      }
    }
    cache.projected = true;
  }
  return cache;
}

inline std::pair<Vector, ForwardCache> forward_classify(const NetworkParams& params, const Vector& x) {
  auto cache = forward(params, Matrix(x), Heads{.classify = true, .project = false});
  Vector p = cache.probs.col(0);
  return {std::move(p), std::move(cache)};
}

inline std::pair<Vector, ForwardCache> forward_project(const NetworkParams& params, const Vector& x) {
  auto cache = forward(params, Matrix(x), Heads{.classify = false, .project = true});
  Vector z = cache.z.col(0);
  return {std::move(z), std::move(cache)};
}

/// Upstream gradients for one cached forward pass: w.r.t. the classifier
/// logits (C x B) and w.r.t. the normalized projection z (proj_dim x B).
/// Either may be left empty when the head did not contribute to the loss.
struct BranchGrad {
  const ForwardCache* cache = nullptr;
  Matrix d_logits;
  Matrix d_z;
};

/// Backpropagates every branch, sums per-example parameter gradients and
/// divides by the batch size of the first branch.
inline Gradients backward(const NetworkParams& params, std::span<const BranchGrad> branches) {
  if (branches.empty()) throw StructuralError("backward: no branches");
  Gradients g = params.zeros_like();
  const Eigen::Index batch = branches.front().cache ? branches.front().cache->batch_size() : 0;
  if (batch == 0) throw StructuralError("backward: empty batch");

  for (const auto& br : branches) {
    if (!br.cache) throw StructuralError("backward: null cache");
    const auto& cache = *br.cache;
    if (cache.batch_size() != batch) throw StructuralError("backward: branches disagree on batch size");
    if (cache.activations.size() != params.encoder.size() + 1)
      throw StructuralError("backward: cache depth does not match encoder");
    const Matrix& h = cache.hidden();
    Matrix dh = Matrix::Zero(h.rows(), h.cols());

    if (br.d_logits.size() > 0) {
      if (!cache.classified) throw StructuralError("backward: logits gradient without classify pass");
      if (br.d_logits.rows() != params.classifier.weight.rows() || br.d_logits.cols() != batch)
        throw StructuralError("backward: logits gradient has wrong shape");
      g.classifier.weight.noalias() += br.d_logits * h.transpose();
      g.classifier.bias += br.d_logits.rowwise().sum();
      dh.noalias() += params.classifier.weight.transpose() * br.d_logits;
    }
    if (br.d_z.size() > 0) {
      if (!cache.projected) throw StructuralError("backward: projection gradient without project pass");
      if (br.d_z.rows() != cache.z.rows() || br.d_z.cols() != batch)
        throw StructuralError("backward: projection gradient has wrong shape");
      Matrix d_raw = Matrix::Zero(cache.z.rows(), batch);
      for (Eigen::Index c = 0; c < batch; ++c) {
        if (cache.degenerate[static_cast<std::size_t>(c)]) continue;
        const auto z = cache.z.col(c);
        const double radial = z.dot(br.d_z.col(c));
        d_raw.col(c) = (br.d_z.col(c) - radial * z) / cache.proj_norm[c];
      }
      g.projection[1].weight.noalias() += d_raw * cache.proj_hidden.transpose();
      g.projection[1].bias += d_raw.rowwise().sum();
      Matrix d_pre = (params.projection[1].weight.transpose() * d_raw).array() *
                     (1.0 - cache.proj_hidden.array().square());
      g.projection[0].weight.noalias() += d_pre * h.transpose();
      g.projection[0].bias += d_pre.rowwise().sum();
      dh.noalias() += params.projection[0].weight.transpose() * d_pre;
    }

    Matrix upstream = std::move(dh);
    for (std::size_t l = params.encoder.size(); l-- > 0;) {
      const Matrix& out = cache.activations[l + 1];
      Matrix d_pre = upstream.array() * (1.0 - out.array().square());
      g.encoder[l].weight.noalias() += d_pre * cache.activations[l].transpose();
      g.encoder[l].bias += d_pre.rowwise().sum();
      if (l > 0) upstream = params.encoder[l].weight.transpose() * d_pre;
    }
  }

  const double inv = 1.0 / static_cast<double>(batch);
  for (auto& [name, t] : g.tensors()) *t *= inv;
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerState {
  NetworkParams velocity;
  double base_lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-3;
  long total_steps = 1;
  long step_count = 0;

  static OptimizerState for_params(const NetworkParams& params, double base_lr, double momentum,
                                   double weight_decay, long total_steps) {
    if (!(base_lr > 0.0)) throw ConfigError("optimizer: base_lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("optimizer: momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("optimizer: weight_decay must be >= 0");
    if (total_steps < 1) throw ConfigError("optimizer: total_steps must be >= 1");
    return OptimizerState{params.zeros_like(), base_lr, momentum, weight_decay, total_steps, 0};
  }

  /// Cosine-annealed rate for the current step.
  double learning_rate() const {
    return base_lr * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(step_count) /
                           static_cast<double>(total_steps)));
  }
};

/// One SGD step with momentum and L2 weight decay. Nonfinite gradients
/// abort the step before any tensor is touched.
inline void sgd_step(NetworkParams& params, const Gradients& grads, OptimizerState& opt) {
  if (opt.step_count >= opt.total_steps)
    throw DomainError("sgd_step: step_count has reached total_steps");
  auto p = params.tensors();
  auto g = grads.tensors();
  auto v = opt.velocity.tensors();
  if (p.size() != g.size() || p.size() != v.size())
    throw StructuralError("sgd_step: parameter/gradient/velocity tensor counts differ");
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].second->rows() != g[i].second->rows() || p[i].second->cols() != g[i].second->cols())
      throw StructuralError("sgd_step: gradient shape mismatch for " + p[i].first);
    if (!g[i].second->allFinite()) throw NumericError("sgd_step: nonfinite gradient in " + g[i].first);
  }
  const double lr = opt.learning_rate();
  for (std::size_t i = 0; i < p.size(); ++i) {
    Matrix& param = *p[i].second;
    Matrix& vel = *v[i].second;
    vel = opt.momentum * vel + (*g[i].second + opt.weight_decay * param);
    param -= lr * vel;
  }
  ++opt.step_count;
}

// ---------------------------------------------------------------------------
// Momentum twin

struct MomentumPair {
  NetworkParams main;
  NetworkParams twin;  // encoder + projection only
  double m = 0.999;

  static MomentumPair from(NetworkParams main, double m) {
    if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("MomentumPair: m must lie in [0, 1]");
    NetworkParams twin = main;
    twin.classifier = Dense{};
    return MomentumPair{std::move(main), std::move(twin), m};
  }
};

/// twin <- m * twin + (1 - m) * main over the encoder and projection tensors.
inline void momentum_update(MomentumPair& pair) {
  auto twin = pair.twin.tensors(true);
  auto main = std::as_const(pair.main).tensors(true);
  if (twin.size() != main.size()) throw StructuralError("momentum_update: tensor counts differ");
  for (std::size_t i = 0; i < twin.size(); ++i) {
    if (twin[i].second->rows() != main[i].second->rows() ||
        twin[i].second->cols() != main[i].second->cols())
      throw StructuralError("momentum_update: shape mismatch for " + twin[i].first);
    if (pair.m == 1.0) continue;
    if (pair.m == 0.0) {
      *twin[i].second = *main[i].second;
    } else {
      *twin[i].second = pair.m * *twin[i].second + (1.0 - pair.m) * *main[i].second;
    }
  }
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON manifest of named row-major tensors.

inline nlohmann::json checkpoint_json(const NetworkShape& shape, const NetworkParams& main,
                                      const NetworkParams* twin = nullptr) {
  nlohmann::json j;
  j["format"] = "concont-checkpoint-v1";
  j["shape"] = {{"input_dim", shape.input_dim},       {"hidden_width", shape.hidden_width},
                {"hidden_layers", shape.hidden_layers}, {"n_classes", shape.n_classes},
                {"proj_dim", shape.proj_dim}};
  auto dump = [&](const NetworkParams& p, const std::string& prefix, bool key_only) {
    for (const auto& [name, t] : p.tensors(key_only)) {
      std::vector<double> values;
      values.reserve(static_cast<std::size_t>(t->size()));
      for (Eigen::Index r = 0; r < t->rows(); ++r)
        for (Eigen::Index c = 0; c < t->cols(); ++c) values.push_back((*t)(r, c));
      j["tensors"].push_back({{"name", prefix + name}, {"shape", {t->rows(), t->cols()}}, {"values", values}});
    }
  };
  dump(main, "", false);
  if (twin) dump(*twin, "twin.", true);
  return j;
}

inline void save_checkpoint(const std::string& path, const NetworkShape& shape, const NetworkParams& main,
                            const NetworkParams* twin = nullptr) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot open " + path + " for writing");
  os << checkpoint_json(shape, main, twin).dump() << '\n';
  if (!os) throw LoadError("write failed for " + path);
}

struct Checkpoint {
  NetworkParams main;
  std::optional<NetworkParams> twin;
};

/// Rebuilds parameters for `expected`, rejecting any missing tensor or shape mismatch.
inline Checkpoint checkpoint_from_json(const nlohmann::json& j, const NetworkShape& expected) {
  if (j.value("format", "") != "concont-checkpoint-v1") throw LoadError("checkpoint: unknown format");
  NetworkShape stored;
  try {
    const auto& s = j.at("shape");
    stored = NetworkShape{s.at("input_dim").get<int>(), s.at("hidden_width").get<int>(),
                          s.at("hidden_layers").get<int>(), s.at("n_classes").get<int>(),
                          s.at("proj_dim").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("checkpoint: bad shape block: ") + e.what());
  }
  if (!(stored == expected)) throw StructuralError("checkpoint: stored shape does not match config");

  Checkpoint ck;
  ck.main = init_network(expected, 0);
  NetworkParams twin = MomentumPair::from(ck.main, 0.0).twin;
  std::map<std::string, const nlohmann::json*> by_name;
  for (const auto& t : j.at("tensors")) by_name[t.at("name").get<std::string>()] = &t;

  auto fill = [&](NetworkParams& p, const std::string& prefix, bool key_only) {
    for (auto& [name, t] : p.tensors(key_only)) {
      auto it = by_name.find(prefix + name);
      if (it == by_name.end()) throw LoadError("checkpoint: missing tensor " + prefix + name);
      const auto& entry = *it->second;
      const auto rows = entry.at("shape").at(0).get<Eigen::Index>();
      const auto cols = entry.at("shape").at(1).get<Eigen::Index>();
      if (rows != t->rows() || cols != t->cols())
        throw StructuralError("checkpoint: tensor " + prefix + name + " has shape " + std::to_string(rows) +
                              "x" + std::to_string(cols) + ", expected " + std::to_string(t->rows()) + "x" +
                              std::to_string(t->cols()));
      const auto& values = entry.at("values");
      if (static_cast<Eigen::Index>(values.size()) != rows * cols)
        throw LoadError("checkpoint: tensor " + prefix + name + " has wrong value count");
      std::size_t k = 0;
      for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) (*t)(r, c) = values[k++].get<double>();
    }
  };
  fill(ck.main, "", false);
  if (by_name.count("twin.encoder.0.weight")) {
    fill(twin, "twin.", true);
    ck.twin = std::move(twin);
  }
  return ck;
}

inline Checkpoint load_checkpoint(const std::string& path, const NetworkShape& expected) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open checkpoint " + path);
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("checkpoint " + path + ": " + e.what());
  }
  return checkpoint_from_json(j, expected);
}

}  // namespace concont
