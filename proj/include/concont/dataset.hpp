// Synthetic blob corpora, partial-label synthesis, partial/unlabeled splits
// and feature-space augmentation.
#pragma once

#include "concont/common.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace concont {

/// Candidate-label bit vector. All-ones encodes an unlabeled example.
class LabelMask {
 public:
  LabelMask() = default;
  explicit LabelMask(int n_classes) : bits_(static_cast<std::size_t>(n_classes), 0) {}

  static LabelMask one_hot(int n_classes, int label) {
    LabelMask m(n_classes);
    m.set(label);
    return m;
  }
  static LabelMask all_ones(int n_classes) {
    LabelMask m(n_classes);
    std::fill(m.bits_.begin(), m.bits_.end(), std::uint8_t{1});
    return m;
  }
  /// Parses a string of '0'/'1' characters, class 0 first.
  static std::optional<LabelMask> parse(std::string_view s) {
    LabelMask m(static_cast<int>(s.size()));
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (s[j] == '1') {
        m.bits_[j] = 1;
      } else if (s[j] != '0') {
        return std::nullopt;
      }
    }
    return m;
  }

  int size() const { return static_cast<int>(bits_.size()); }
  bool test(int j) const { return bits_[static_cast<std::size_t>(j)] != 0; }
  void set(int j, bool v = true) { bits_[static_cast<std::size_t>(j)] = v ? 1 : 0; }
  int count() const {
    return static_cast<int>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  bool all() const { return count() == size(); }
  bool none() const { return count() == 0; }
  bool is_one_hot() const { return count() == 1; }
  /// Lowest set index, or -1.
  int first() const {
    for (int j = 0; j < size(); ++j)
      if (test(j)) return j;
    return -1;
  }

  std::string to_string() const {
    std::string s(bits_.size(), '0');
    for (std::size_t j = 0; j < bits_.size(); ++j)
      if (bits_[j]) s[j] = '1';
    return s;
  }

  /// Mask as a 0/1 real vector, for elementwise products with predictions.
  Vector as_vector() const {
    Vector v(size());
    for (int j = 0; j < size(); ++j) v[j] = test(j) ? 1.0 : 0.0;
    return v;
  }

  friend bool operator==(const LabelMask&, const LabelMask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct Example {
  Vector features;
  LabelMask candidate_mask;
  std::optional<int> true_label;  // evaluation only

  bool is_unlabeled() const { return candidate_mask.all(); }
};

using Corpus = std::vector<Example>;

struct CorpusSpec {
  int n_classes = 4;
  int dim = 8;
  int n_samples = 2000;
  double class_separation = 6.0;
  double noise_sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_classes < 2) throw ConfigError("CorpusSpec: n_classes must be >= 2");
    if (dim < 2) throw ConfigError("CorpusSpec: dim must be >= 2");
    if (n_samples < n_classes) throw ConfigError("CorpusSpec: n_samples must be >= n_classes");
    if (!(class_separation > 0.0)) throw ConfigError("CorpusSpec: class_separation must be > 0");
    if (!(noise_sigma >= 0.0)) throw ConfigError("CorpusSpec: noise_sigma must be >= 0");
  }
};

struct AugmentConfig {
  double weak_sigma = 0.3;
  double strong_sigma = 0.8;
  double strong_mask_frac = 0.25;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(weak_sigma >= 0.0)) throw ConfigError("AugmentConfig: weak_sigma must be >= 0");
    if (!(strong_sigma >= 0.0)) throw ConfigError("AugmentConfig: strong_sigma must be >= 0");
    if (weak_sigma > strong_sigma)
      throw ConfigError("AugmentConfig: weak_sigma must not exceed strong_sigma");
    if (!(strong_mask_frac >= 0.0 && strong_mask_frac < 1.0))
      throw ConfigError("AugmentConfig: strong_mask_frac must lie in [0, 1)");
  }
};

enum class AugmentKind { weak, strong };

/// Cluster centers for a CorpusSpec: scaled simplex vertices when C <= d (pairwise
/// distance = class_separation), otherwise a regular C-gon in the first two
/// coordinates with adjacent distance = class_separation. Centered at 0.
inline std::vector<Vector> blob_centers(const CorpusSpec& spec) {
  spec.validate();
  std::vector<Vector> centers(static_cast<std::size_t>(spec.n_classes),
                              Vector::Zero(spec.dim));
  if (spec.n_classes <= spec.dim) {
    const double scale = spec.class_separation / std::numbers::sqrt2;
    const double offset = scale / spec.n_classes;
    for (int c = 0; c < spec.n_classes; ++c) {
      for (int k = 0; k < spec.n_classes; ++k) centers[c][k] = -offset;
      centers[c][c] += scale;
    }
  } else {
    const double radius =
        spec.class_separation / (2.0 * std::sin(std::numbers::pi / spec.n_classes));
    for (int c = 0; c < spec.n_classes; ++c) {
      const double angle = 2.0 * std::numbers::pi * c / spec.n_classes;
      centers[c][0] = radius * std::cos(angle);
      centers[c][1] = radius * std::sin(angle);
    }
  }
  return centers;
}

/// Isotropic Gaussian blobs, class-balanced within +-1, masks one-hot.
inline Corpus generate_blobs(const CorpusSpec& spec) {
  spec.validate();
  const auto centers = blob_centers(spec);
  Rng rng(mix_seed(spec.seed, 0xb10b5));
  std::vector<int> labels(static_cast<std::size_t>(spec.n_samples));
  for (int i = 0; i < spec.n_samples; ++i) labels[i] = i % spec.n_classes;
  std::shuffle(labels.begin(), labels.end(), rng);

  std::normal_distribution<double> noise(0.0, 1.0);
  Corpus out;
  out.reserve(labels.size());
  for (int label : labels) {
    Example ex;
    ex.features = centers[label];
    if (spec.noise_sigma > 0.0)
      for (int k = 0; k < spec.dim; ++k) ex.features[k] += spec.noise_sigma * noise(rng);
    ex.candidate_mask = LabelMask::one_hot(spec.n_classes, label);
    ex.true_label = label;
    out.push_back(std::move(ex));
  }
  return out;
}

/// Flips every negative label into the candidate set with probability q.
inline Corpus synthesize_partial_labels(Corpus corpus, double q, std::uint64_t seed) {
  if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("synthesize_partial_labels: q must lie in [0, 1]");
  Rng rng(mix_seed(seed, 0x9a27));
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto& ex = corpus[i];
    if (!ex.true_label)
      throw ConfigError("synthesize_partial_labels: example " + std::to_string(i) +
                        " has no true_label");
    const int n_classes = ex.candidate_mask.size();
    LabelMask mask = LabelMask::one_hot(n_classes, *ex.true_label);
    for (int j = 0; j < n_classes; ++j)
      if (j != *ex.true_label && u(rng) < q) mask.set(j);
    ex.candidate_mask = std::move(mask);
  }
  return corpus;
}

struct PartialSplit {
  Corpus partial;
  Corpus unlabeled;
};

/// Keeps floor(n * fraction) masks, stratified by true label so per-class
/// partial counts differ by at most one; the rest become all-ones.
inline PartialSplit split_partial_unlabeled(const Corpus& corpus, double partial_fraction,
                                            std::uint64_t seed) {
  if (!(partial_fraction > 0.0 && partial_fraction <= 1.0))
    throw ConfigError("split_partial_unlabeled: fraction must lie in (0, 1]");
  if (corpus.empty()) throw ConfigError("split_partial_unlabeled: corpus is empty");

  const auto n = corpus.size();
  const auto n_partial = static_cast<std::size_t>(std::floor(static_cast<double>(n) * partial_fraction + 1e-9));
  Rng rng(mix_seed(seed, 0x5b117));

  // Bucket indices by class; examples without a label share one bucket.
  const int n_classes = corpus.front().candidate_mask.size();
  std::vector<std::vector<std::size_t>> buckets(static_cast<std::size_t>(n_classes) + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& label = corpus[i].true_label;
    buckets[label ? static_cast<std::size_t>(*label) : buckets.size() - 1].push_back(i);
  }
  for (auto& b : buckets) std::shuffle(b.begin(), b.end(), rng);

  std::vector<std::size_t> class_order(buckets.size());
  for (std::size_t c = 0; c < class_order.size(); ++c) class_order[c] = c;
  std::shuffle(class_order.begin(), class_order.end(), rng);

  std::vector<char> keep(n, 0);
  std::vector<std::size_t> taken(buckets.size(), 0);
  std::size_t selected = 0;
  while (selected < n_partial) {
    for (auto c : class_order) {
      if (selected == n_partial) break;
      if (taken[c] < buckets[c].size()) {
        keep[buckets[c][taken[c]++]] = 1;
        ++selected;
      }
    }
  }

  PartialSplit split;
  split.partial.reserve(n_partial);
  split.unlabeled.reserve(n - n_partial);
  for (std::size_t i = 0; i < n; ++i) {
    if (keep[i]) {
      split.partial.push_back(corpus[i]);
    } else {
      Example ex = corpus[i];
      ex.candidate_mask = LabelMask::all_ones(ex.candidate_mask.size());
      split.unlabeled.push_back(std::move(ex));
    }
  }
  return split;
}

/// Weak: additive Gaussian noise. Strong: larger noise, then a fixed
/// fraction floor(strong_mask_frac * d) of coordinates set to zero.
inline Vector augment(const Vector& x, AugmentKind kind, const AugmentConfig& cfg, Rng& draw) {
  Vector out = x;
  const double sigma = kind == AugmentKind::weak ? cfg.weak_sigma : cfg.strong_sigma;
  if (sigma > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma);
    for (Eigen::Index k = 0; k < out.size(); ++k) out[k] += noise(draw);
  }
  if (kind == AugmentKind::strong && cfg.strong_mask_frac > 0.0) {
    const auto d = static_cast<std::size_t>(out.size());
    const auto n_zero = static_cast<std::size_t>(std::floor(cfg.strong_mask_frac * static_cast<double>(d)));
    std::vector<std::size_t> idx(d);
    for (std::size_t k = 0; k < d; ++k) idx[k] = k;
    for (std::size_t k = 0; k < n_zero; ++k) {
      std::uniform_int_distribution<std::size_t> pick(k, d - 1);
      std::swap(idx[k], idx[pick(draw)]);
      out[static_cast<Eigen::Index>(idx[k])] = 0.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV corpus files: f_0..f_{d-1},true_label,mask with a mandatory header.

inline void write_corpus_csv(std::ostream& os, const Corpus& corpus) {
  if (corpus.empty()) throw ConfigError("write_corpus_csv: corpus is empty");
  const auto d = corpus.front().features.size();
  for (Eigen::Index k = 0; k < d; ++k) os << "f_" << k << ',';
  os << "true_label,mask\n";
  os << std::setprecision(17);
  for (const auto& ex : corpus) {
    if (ex.features.size() != d) throw StructuralError("write_corpus_csv: ragged feature vectors");
    for (Eigen::Index k = 0; k < d; ++k) os << ex.features[k] << ',';
    if (ex.true_label) os << *ex.true_label;
    os << ',' << ex.candidate_mask.to_string() << '\n';
  }
}

inline void save_corpus_csv(const std::string& path, const Corpus& corpus) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot open " + path + " for writing");
  write_corpus_csv(os, corpus);
  if (!os) throw LoadError("write failed for " + path);
}

namespace detail {
inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      break;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return fields;
}
}  // namespace detail

inline Corpus read_corpus_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw LoadError("corpus: missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_commas(line);
  if (header.size() < 4 || header[header.size() - 2] != "true_label" || header.back() != "mask")
    throw LoadError("corpus: header must be f_0..f_{d-1},true_label,mask");
  const auto d = header.size() - 2;
  for (std::size_t k = 0; k < d; ++k)
    if (header[k] != "f_" + std::to_string(k))
      throw LoadError("corpus: unexpected header column '" + std::string(header[k]) + "'");

  Corpus corpus;
  std::size_t row = 0;
  int n_classes = -1;
  while (std::getline(is, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto where = "corpus row " + std::to_string(row) + ": ";
    const auto fields = detail::split_commas(line);
    if (fields.size() != d + 2)
      throw LoadError(where + "expected " + std::to_string(d + 2) + " fields, got " +
                      std::to_string(fields.size()));
    Example ex;
    ex.features.resize(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
      // strtod instead of from_chars: libstdc++ 11 lacks floating from_chars on some targets.
      std::string tok(fields[k]);
      char* end = nullptr;
      const double v = std::strtod(tok.c_str(), &end);
      if (tok.empty() || end != tok.c_str() + tok.size())
        throw LoadError(where + "bad feature value '" + tok + "'");
      ex.features[static_cast<Eigen::Index>(k)] = v;
    }
    auto mask = LabelMask::parse(fields[d + 1]);
    if (!mask || mask->size() < 2) throw LoadError(where + "bad mask '" + std::string(fields[d + 1]) + "'");
    if (mask->none()) throw LoadError(where + "mask has no candidate");
    if (n_classes < 0) n_classes = mask->size();
    if (mask->size() != n_classes) throw LoadError(where + "mask width differs from earlier rows");
    if (!fields[d].empty()) {
      int label = -1;
      const auto f = fields[d];
      auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), label);
      if (ec != std::errc{} || p != f.data() + f.size() || label < 0 || label >= n_classes)
        throw LoadError(where + "bad true_label '" + std::string(f) + "'");
      if (!mask->test(label)) throw LoadError(where + "true_label is not a candidate");
      ex.true_label = label;
    }
    ex.candidate_mask = std::move(*mask);
    corpus.push_back(std::move(ex));
  }
  if (corpus.empty()) throw LoadError("corpus: no data rows");
  return corpus;
}

inline Corpus load_corpus_csv(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open corpus " + path);
  return read_corpus_csv(is);
}

}  // namespace concont
