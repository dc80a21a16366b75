// Command implementations behind the `concont` executable: gen, train and
// report. Each command writes its artifacts plus a JSON manifest under an
// output root and returns the list of files it produced.
#pragma once

#include "concont/common.hpp"
#include "concont/dataset.hpp"
#include "concont/evalkit.hpp"
#include "concont/network.hpp"
#include "concont/trainer.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace concont::cli {

namespace fs = std::filesystem;
using nlohmann::json;

/// Explicit --out wins, then CONCONT_OUT_DIR, then ./runs.
inline fs::path output_root(const std::string& explicit_out = {}) {
  if (!explicit_out.empty()) return explicit_out;
  if (const char* env = std::getenv("CONCONT_OUT_DIR"); env && *env) return env;
  return "runs";
}

/// FNV-1a over the file bytes, as 16 hex digits.
inline std::string file_fingerprint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

class Stopwatch {
 public:
  json finish() const {
    const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count();
    return {{"started", started_}, {"finished", utc_now()}, {"seconds", secs}};
  }

 private:
  std::string started_ = utc_now();
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

template <class Fn>
void write_file(const fs::path& path, Fn&& body) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw LoadError("cannot write " + path.string());
  body(os);
  os.flush();
  if (!os) throw LoadError("write failed: " + path.string());
}

inline void write_json(const fs::path& path, const json& j) {
  write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

// ---------------------------------------------------------------------------
// gen

struct GenOptions {
  CorpusSpec spec;
  double q = 0.5;
  double partial_frac = 0.1;
  int test_samples = 1000;  // 0 = no test file
  std::string name = "corpus";

  void validate() const {
    spec.validate();
    if (!(q >= 0.0 && q <= 1.0)) throw ConfigError("--q must lie in [0, 1]");
    if (!(partial_frac > 0.0 && partial_frac <= 1.0)) throw ConfigError("--partial-frac must lie in (0, 1]");
    if (test_samples < 0) throw ConfigError("--test-samples must be >= 0");
    if (name.empty()) throw ConfigError("--name must not be empty");
  }
};

inline json to_json(const CorpusSpec& s) {
  return {{"classes", s.n_classes}, {"dim", s.dim},   {"samples", s.n_samples},
          {"sep", s.class_separation}, {"noise", s.noise_sigma}, {"seed", s.seed}};
}

inline json to_json(const GenOptions& g) {
  return {{"spec", to_json(g.spec)}, {"q", g.q}, {"partial_frac", g.partial_frac},
          {"test_samples", g.test_samples}, {"name", g.name}};
}

struct GeneratedData {
  Corpus train;  // partial rows first, then all-ones rows
  Corpus test;   // one-hot masks of the true label
  std::size_t partial_rows = 0;  // some may carry an all-ones mask when q > 0
};

/// Training pool and held-out test set for one recipe. The test set shares
/// the class centers and uses its own sampling seed.
inline GeneratedData make_corpus(const GenOptions& opt) {
  opt.validate();
  GeneratedData out;
  auto split = split_partial_unlabeled(synthesize_partial_labels(generate_blobs(opt.spec), opt.q, opt.spec.seed),
                                       opt.partial_frac, opt.spec.seed);
  out.partial_rows = split.partial.size();
  out.train = std::move(split.partial);
  out.train.insert(out.train.end(), split.unlabeled.begin(), split.unlabeled.end());
  if (opt.test_samples > 0) {
    CorpusSpec t = opt.spec;
    t.n_samples = opt.test_samples;
    t.seed = opt.spec.seed + 1000;
    out.test = generate_blobs(t);
  }
  return out;
}

struct Artifacts {
  std::vector<fs::path> files;
  fs::path manifest;
  bool ok = true;
};

inline Artifacts cmd_gen(const GenOptions& opt, const fs::path& root) {
  Stopwatch clock;
  const auto data = make_corpus(opt);
  Artifacts art;
  const auto corpus_path = root / (opt.name + ".csv");
  write_file(corpus_path, [&](std::ostream& os) { write_corpus_csv(os, data.train); });
  art.files.push_back(corpus_path);
  if (!data.test.empty()) {
    const auto test_path = root / (opt.name + "_test.csv");
    write_file(test_path, [&](std::ostream& os) { write_corpus_csv(os, data.test); });
    art.files.push_back(test_path);
  }
  json files = json::array();
  for (const auto& f : art.files) files.push_back(f.string());
  art.manifest = root / (opt.name + ".manifest.json");
  write_json(art.manifest, {{"command", "gen"},
                            {"config", to_json(opt)},
                            {"seed", opt.spec.seed},
                            {"corpus_fingerprint", file_fingerprint(corpus_path)},
                            {"partial_rows", data.partial_rows},
                            {"artifacts", files},
                            {"wall_clock", clock.finish()}});
  return art;
}

// ---------------------------------------------------------------------------
// train

inline json to_json(const AugmentConfig& a) {
  return {{"weak_sigma", a.weak_sigma}, {"strong_sigma", a.strong_sigma}, {"strong_mask_frac", a.strong_mask_frac}};
}

inline json to_json(const TrainConfig& c) {
  json j = {{"epochs", c.epochs},
            {"batch_size", c.batch_size},
            {"lambda", c.weights.lambda},
            {"mu", c.weights.mu},
            {"temperature", c.weights.temperature},
            {"base_lr", c.base_lr},
            {"sgd_momentum", c.sgd_momentum},
            {"weight_decay", c.weight_decay},
            {"twin_momentum", c.twin_momentum},
            {"gamma", c.thresholds.gamma},
            {"count_ema", c.thresholds.count_ema},
            {"queue_capacity", c.queue_capacity},
            {"augment", to_json(c.augment)},
            {"hidden_width", c.hidden_width},
            {"hidden_layers", c.hidden_layers},
            {"proj_dim", c.proj_dim},
            {"use_unlabeled", c.use_unlabeled},
            {"branch_mode", c.branch_mode == BranchMode::three ? "three" : "two"},
            {"strategy", std::string(to_string(c.strategy))},
            {"threshold_mode", c.threshold_mode == ThresholdMode::adaptive ? "adaptive" : "fixed"},
            {"pseudo_mode", c.pseudo_mode == PseudoMode::hard ? "hard" : "soft"},
            {"disable_l_reg", c.disable_l_reg},
            {"disable_l_reg_prime", c.disable_l_reg_prime},
            {"use_standard_ce", c.use_standard_ce},
            {"partial_per_batch", c.partial_per_batch},
            {"confidence_epoch", c.confidence_epoch},
            {"seed", c.seed}};
  const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  j["tau_init"] = opt(c.thresholds.init);
  j["tau_lower"] = opt(c.thresholds.lower);
  j["tau_upper"] = opt(c.thresholds.upper);
  j["key_augment"] = c.key_augment ? to_json(*c.key_augment) : json(nullptr);
  return j;
}

struct TrainOptions {
  std::string corpus;
  std::string test;  // optional
  TrainConfig config;
  int seeds = 1;  // seeds config.seed, config.seed + 1, ...
  std::string name = "run";

  void validate() const {
    if (corpus.empty()) throw ConfigError("--corpus is required");
    if (seeds < 1) throw ConfigError("--seeds must be >= 1");
    if (name.empty()) throw ConfigError("--name must not be empty");
    config.validate();
  }
};

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::optional<double> accuracy;
  std::string error;
  fs::path metrics;
  fs::path checkpoint;
};

inline fs::path seed_stem(const fs::path& root, const std::string& name, std::uint64_t seed) {
  return root / (name + "_seed" + std::to_string(seed));
}

inline Artifacts cmd_train(const TrainOptions& opt, const fs::path& root, std::ostream& log = std::cerr) {
  Stopwatch clock;
  opt.validate();
  const Corpus train = load_corpus_csv(opt.corpus);
  const Corpus test = opt.test.empty() ? Corpus{} : load_corpus_csv(opt.test);

  Artifacts art;
  std::vector<SeedOutcome> outcomes;
  for (int k = 0; k < opt.seeds; ++k) {
    TrainConfig cfg = opt.config;
    cfg.seed = opt.config.seed + static_cast<std::uint64_t>(k);
    SeedOutcome out;
    out.seed = cfg.seed;
    const auto stem = seed_stem(root, opt.name, cfg.seed);
    try {
      auto result = train_loop(cfg, train, test);
      out.metrics = stem.string() + ".metrics.jsonl";
      write_file(out.metrics, [&](std::ostream& os) { write_metrics_jsonl(os, result.history); });
      out.checkpoint = stem.string() + ".ckpt.json";
      save_checkpoint(out.checkpoint.string(), result.shape, result.nets.main, &result.nets.twin);
      if (!result.history.epochs.empty()) out.accuracy = result.history.epochs.back().test_accuracy;
      out.ok = true;
      art.files.push_back(out.metrics);
      art.files.push_back(out.checkpoint);
    } catch (const NumericError& e) {
      out.error = e.what();
      art.ok = false;
      log << "seed " << cfg.seed << " failed: " << e.what() << '\n';
    }
    outcomes.push_back(std::move(out));
  }

  json runs = json::array();
  std::vector<double> accs;
  for (const auto& o : outcomes) {
    json r = {{"seed", o.seed}, {"status", o.ok ? "ok" : "failed"}};
    r["accuracy"] = o.accuracy ? json(*o.accuracy) : json(nullptr);
    if (!o.ok) r["error"] = o.error;
    if (o.ok) r["metrics"] = o.metrics.string();
    runs.push_back(r);
    if (o.accuracy) accs.push_back(*o.accuracy);
  }
  json summary = {{"name", opt.name}, {"runs", runs}, {"accuracies", accs}};
  if (!accs.empty()) {
    double mean = 0.0;
    for (double a : accs) mean += a;
    mean /= static_cast<double>(accs.size());
    double var = 0.0;
    for (double a : accs) var += (a - mean) * (a - mean);
    summary["mean"] = mean;
    summary["std"] = std::sqrt(var / static_cast<double>(accs.size()));
  } else {
    summary["mean"] = nullptr;
    summary["std"] = nullptr;
  }
  const auto summary_path = root / (opt.name + ".summary.json");
  write_json(summary_path, summary);
  art.files.push_back(summary_path);

  json files = json::array();
  for (const auto& f : art.files) files.push_back(f.string());
  art.manifest = root / (opt.name + ".manifest.json");
  write_json(art.manifest, {{"command", "train"},
                            {"config", to_json(opt.config)},
                            {"seeds", opt.seeds},
                            {"seed", opt.config.seed},
                            {"corpus", opt.corpus},
                            {"test", opt.test},
                            {"corpus_fingerprint", file_fingerprint(opt.corpus)},
                            {"artifacts", files},
                            {"wall_clock", clock.finish()}});
  return art;
}

// ---------------------------------------------------------------------------
// report

/// The parts of a metrics JSONL file the report needs.
struct RunMetrics {
  std::string name;
  std::optional<json> last_epoch;
  std::optional<ConfidenceSnapshot> confidence;
};

inline RunMetrics read_metrics_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  RunMetrics m;
  m.name = path.filename().string();
  if (const auto pos = m.name.find(".metrics.jsonl"); pos != std::string::npos) m.name.resize(pos);
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw LoadError(path.string() + ": line " + std::to_string(row) + ": " + e.what());
    }
    const auto type = j.value("type", "");
    if (type == "epoch") {
      m.last_epoch = j;
    } else if (type == "confidence") {
      ConfidenceSnapshot s;
      s.epoch = j.at("epoch").get<int>();
      s.p_score = j.at("p_score").get<std::vector<double>>();
      s.max_prob = j.at("max_prob").get<std::vector<double>>();
      for (int c : j.at("correct").get<std::vector<int>>()) s.correct.push_back(static_cast<char>(c != 0));
      m.confidence = std::move(s);
    }
  }
  return m;
}

struct ReportOptions {
  std::vector<std::string> runs;  // metrics JSONL files; the first is the delta baseline
  std::string name = "report";
  std::size_t pr_points = 101;
};

struct PRComparison {
  std::vector<PRPoint> p_score;
  std::vector<PRPoint> max_prob;
  double auc_p_score = 0.0;
  double auc_max_prob = 0.0;
};

inline PRComparison compare_confidence(const ConfidenceSnapshot& s, std::size_t n_points) {
  PRComparison c;
  c.p_score = pr_curve(s.p_score, s.correct, n_points);
  c.max_prob = pr_curve(s.max_prob, s.correct, n_points);
  c.auc_p_score = pr_auc(c.p_score);
  c.auc_max_prob = pr_auc(c.max_prob);
  return c;
}

inline Artifacts cmd_report(const ReportOptions& opt, const fs::path& root, std::ostream& log = std::cerr) {
  Stopwatch clock;
  if (opt.runs.empty()) throw ConfigError("report: at least one --run is required");
  if (opt.pr_points < 2) throw ConfigError("report: --pr-points must be >= 2");

  Artifacts art;
  std::vector<RunMetrics> loaded;
  json skipped = json::array();
  for (const auto& path : opt.runs) {
    if (!fs::exists(path)) {
      log << "warning: run not found, skipped: " << path << '\n';
      skipped.push_back(path);
      continue;
    }
    loaded.push_back(read_metrics_jsonl(path));
  }
  if (loaded.empty()) throw LoadError("report: none of the requested runs exist");

  // metric -> per-run value (nullopt when the run lacks it)
  std::vector<std::pair<std::string, std::vector<std::optional<double>>>> table;
  const auto add = [&](const std::string& metric, std::size_t run, std::optional<double> v) {
    auto it = std::find_if(table.begin(), table.end(), [&](const auto& e) { return e.first == metric; });
    if (it == table.end()) {
      table.emplace_back(metric, std::vector<std::optional<double>>(loaded.size()));
      it = table.end() - 1;
    }
    it->second[run] = v;
  };

  for (std::size_t r = 0; r < loaded.size(); ++r) {
    const auto& m = loaded[r];
    if (m.last_epoch) {
      const auto& e = *m.last_epoch;
      const auto counts = e.at("confident_counts").get<std::vector<long>>();
      const auto bal = balance_stats(counts);
      const auto path = root / (m.name + ".balance.csv");
      write_file(path, [&](std::ostream& os) { write_balance_csv(os, counts); });
      art.files.push_back(path);
      add("final_test_accuracy", r, e.at("test_accuracy").is_null() ? std::nullopt
                                                                   : std::optional(e.at("test_accuracy").get<double>()));
      add("final_pseudo_precision", r, e.at("pseudo_precision").get<double>());
      add("final_balance_std", r, bal.std);
      add("final_balance_max_min_ratio", r, bal.max_min_ratio);
    }
    if (m.confidence && !m.confidence->p_score.empty()) {
      const auto cmp = compare_confidence(*m.confidence, opt.pr_points);
      const auto ps = root / (m.name + ".pr_pscore.csv");
      const auto mp = root / (m.name + ".pr_maxprob.csv");
      write_file(ps, [&](std::ostream& os) { write_pr_csv(os, cmp.p_score); });
      write_file(mp, [&](std::ostream& os) { write_pr_csv(os, cmp.max_prob); });
      art.files.push_back(ps);
      art.files.push_back(mp);
      add("pr_auc_p_score", r, cmp.auc_p_score);
      add("pr_auc_max_prob", r, cmp.auc_max_prob);
      add("p_score_auc_minus_max_prob_auc", r, cmp.auc_p_score - cmp.auc_max_prob);
    }
  }

  const auto ablation = root / (opt.name + ".ablation.csv");
  write_file(ablation, [&](std::ostream& os) {
    os << "metric,run,value,delta\n";
    os.precision(17);
    for (const auto& [metric, values] : table) {
      for (std::size_t r = 0; r < values.size(); ++r) {
        os << metric << ',' << loaded[r].name << ',';
        if (values[r]) os << *values[r];
        os << ',';
        if (values[r] && values[0]) os << *values[r] - *values[0];
        os << '\n';
      }
    }
  });
  art.files.push_back(ablation);

  json files = json::array();
  for (const auto& f : art.files) files.push_back(f.string());
  art.manifest = root / (opt.name + ".manifest.json");
  write_json(art.manifest, {{"command", "report"},
                            {"config", {{"runs", opt.runs}, {"name", opt.name}, {"pr_points", opt.pr_points}}},
                            {"skipped", skipped},
                            {"artifacts", files},
                            {"wall_clock", clock.finish()}});
  return art;
}

}  // namespace concont::cli
