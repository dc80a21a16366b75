#include "concont/cli.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

using namespace concont;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& tag) {
  const auto dir = fs::temp_directory_path() / ("concont_test_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Runs the CLI binary; returns the exit status and captures stderr into `err`.
int run_cli(const std::string& args, std::string* err = nullptr) {
  const auto log = fs::temp_directory_path() / ("concont_cli_" + std::to_string(::getpid()) + ".log");
  const std::string cmd = std::string(CONCONT_CLI_PATH) + " " + args + " >/dev/null 2>" + log.string();
  const int status = std::system(cmd.c_str());
  if (err) {
    std::ifstream in(log);
    std::ostringstream os;
    os << in.rdbuf();
    *err = os.str();
  }
  fs::remove(log);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::vector<json> read_jsonl(const fs::path& p, const std::string& type) {
  std::ifstream in(p);
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    auto j = json::parse(line);
    if (j.value("type", "") == type) out.push_back(std::move(j));
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    if (!line.empty() && line.back() == ',') row.emplace_back();
    rows.push_back(std::move(row));
  }
  return rows;
}

cli::TrainOptions quick_train(const fs::path& corpus, const fs::path& test, const std::string& name) {
  cli::TrainOptions t;
  t.corpus = corpus.string();
  t.test = test.string();
  t.name = name;
  t.config.epochs = 4;
  t.config.batch_size = 16;
  t.config.queue_capacity = 64;
  t.config.hidden_width = 12;
  t.config.proj_dim = 6;
  t.config.confidence_epoch = 2;
  t.config.seed = 1;
  return t;
}

fs::path small_corpus(const fs::path& dir, double q = 0.0) {
  cli::GenOptions g;
  g.spec = CorpusSpec{4, 8, 200, 6.0, 1.0, 3};
  g.q = q;
  g.partial_frac = 0.2;
  g.test_samples = 100;
  cli::cmd_gen(g, dir);
  return dir / "corpus.csv";
}

}  // namespace

TEST(OutputRoot, FlagThenEnvThenDefault) {
  ::unsetenv("CONCONT_OUT_DIR");
  EXPECT_EQ(cli::output_root(), fs::path("runs"));
  ::setenv("CONCONT_OUT_DIR", "/tmp/envroot", 1);
  EXPECT_EQ(cli::output_root(), fs::path("/tmp/envroot"));
  EXPECT_EQ(cli::output_root("/tmp/flag"), fs::path("/tmp/flag"));
  ::unsetenv("CONCONT_OUT_DIR");
}

TEST(Gen, ZeroFlipRateGivesOneHotMasks) {
  const auto dir = fresh_dir("gen_q0");
  ASSERT_EQ(run_cli("--out " + dir.string() + " gen --q 0 --partial-frac 1 --samples 120"), 0);
  const auto corpus = load_corpus_csv((dir / "corpus.csv").string());
  ASSERT_EQ(corpus.size(), 120u);
  for (const auto& ex : corpus) EXPECT_TRUE(ex.candidate_mask.is_one_hot());
  fs::remove_all(dir);
}

TEST(Gen, IdempotentHashes) {
  const auto a = fresh_dir("gen_a"), b = fresh_dir("gen_b");
  const std::string flags = " gen --classes 5 --samples 300 --seed 9 --q 0.3";
  ASSERT_EQ(run_cli("--out " + a.string() + flags), 0);
  ASSERT_EQ(run_cli("--out " + b.string() + flags), 0);
  for (const char* f : {"corpus.csv", "corpus_test.csv"})
    EXPECT_EQ(cli::file_fingerprint(a / f), cli::file_fingerprint(b / f)) << f;
  EXPECT_EQ(read_json(a / "corpus.manifest.json").at("corpus_fingerprint"),
            read_json(b / "corpus.manifest.json").at("corpus_fingerprint"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Gen, PartialRowCount) {
  const auto dir = fresh_dir("gen_rows");
  ASSERT_EQ(run_cli("--out " + dir.string() + " gen --classes 4 --samples 400 --partial-frac 0.2 --q 0"), 0);
  const auto corpus = load_corpus_csv((dir / "corpus.csv").string());
  EXPECT_EQ(std::count_if(corpus.begin(), corpus.end(), [](const Example& e) { return !e.is_unlabeled(); }), 80);
  EXPECT_EQ(read_json(dir / "corpus.manifest.json").at("partial_rows"), 80);

  // With q > 0 a partial row may flip into the all-ones mask.
  ASSERT_EQ(run_cli("--out " + dir.string() + " gen --classes 4 --samples 400 --partial-frac 0.2 --name flipped"), 0);
  const auto flipped = load_corpus_csv((dir / "flipped.csv").string());
  EXPECT_EQ(read_json(dir / "flipped.manifest.json").at("partial_rows"), 80);
  EXPECT_LE(std::count_if(flipped.begin(), flipped.end(), [](const Example& e) { return !e.is_unlabeled(); }), 80);
  fs::remove_all(dir);
}

TEST(Gen, InvalidFlagsExitNonzero) {
  const auto dir = fresh_dir("gen_bad");
  EXPECT_NE(run_cli("--out " + dir.string() + " gen --classes abc"), 0);
  EXPECT_NE(run_cli("--out " + dir.string() + " gen --bogus 1"), 0);
  EXPECT_NE(run_cli("--out " + dir.string() + " gen --classes 1"), 0);
  EXPECT_NE(run_cli("--out " + dir.string() + " gen --q 1.5"), 0);
  EXPECT_NE(run_cli("--out " + dir.string()), 0);
  fs::remove_all(dir);
}

TEST(Train, PartialOnlyExcludesUnlabeledRows) {
  const auto dir = fresh_dir("train_po");
  const auto corpus = small_corpus(dir);
  ASSERT_EQ(run_cli("--out " + dir.string() + " train --corpus " + corpus.string() +
                    " --mode partial-only --epochs 2 --batch-size 16 --queue 64 --confidence-epoch 0 --seed 4"),
            0);
  const auto steps = read_jsonl(dir / "run_seed4.metrics.jsonl", "step");
  // 40 partial rows in batches of 16: 16, 16, 8.
  EXPECT_EQ(std::count_if(steps.begin(), steps.end(), [](const json& s) { return s.at("epoch") == 0; }), 3);
  for (const auto& s : steps) {
    long n = 0;
    for (long c : s.at("confident_counts").get<std::vector<long>>()) n += c;
    EXPECT_LE(n, 16);
  }
  fs::remove_all(dir);
}

TEST(Train, SupconWithFixedThresholds) {
  const auto dir = fresh_dir("train_fixed");
  const auto corpus = small_corpus(dir, 0.5);
  ASSERT_EQ(run_cli("--out " + dir.string() + " train --corpus " + corpus.string() +
                    " --strategy supcon --threshold-mode fixed --epochs 3 --batch-size 16 --queue 64"
                    " --confidence-epoch 0 --seed 2"),
            0);
  const auto steps = read_jsonl(dir / "run_seed2.metrics.jsonl", "step");
  ASSERT_FALSE(steps.empty());
  for (const auto& s : steps) EXPECT_EQ(s.at("thresholds"), steps.front().at("thresholds"));
  EXPECT_EQ(steps.front().at("thresholds"), json(std::vector<double>(4, 0.8)));
  const auto manifest = read_json(dir / "run.manifest.json");
  EXPECT_EQ(manifest.at("config").at("strategy"), "supcon");
  for (const auto& f : manifest.at("artifacts")) EXPECT_TRUE(fs::exists(f.get<std::string>())) << f;
  fs::remove_all(dir);
}

TEST(Train, ThreeSeedsOnDefaultRecipe) {
  const auto dir = fresh_dir("train_seeds");
  ASSERT_EQ(run_cli("--out " + dir.string() + " gen --seed 1"), 0);
  ASSERT_EQ(run_cli("--out " + dir.string() + " train --corpus " + (dir / "corpus.csv").string() + " --test " +
                    (dir / "corpus_test.csv").string() + " --seeds 3 --seed 1"),
            0);
  const auto summary = read_json(dir / "run.summary.json");
  ASSERT_EQ(summary.at("accuracies").size(), 3u);
  ASSERT_EQ(summary.at("runs").size(), 3u);
  EXPECT_TRUE(summary.at("mean").is_number());
  EXPECT_TRUE(summary.at("std").is_number());
  double mean = 0.0;
  for (const auto& a : summary.at("accuracies")) mean += a.get<double>() / 3.0;
  EXPECT_NEAR(summary.at("mean").get<double>(), mean, 1e-12);
  for (std::uint64_t s : {1, 2, 3}) EXPECT_TRUE(fs::exists(dir / ("run_seed" + std::to_string(s) + ".ckpt.json")));
  fs::remove_all(dir);
}

TEST(Train, CorruptCorpusNamesRow) {
  const auto dir = fresh_dir("train_corrupt");
  {
    std::ofstream os(dir / "bad.csv");
    os << "f_0,f_1,true_label,mask\n0.1,0.2,0,10\n0.3,0.4,1,01\n0.5,oops,1,01\n";
  }
  std::string err;
  EXPECT_NE(run_cli("--out " + dir.string() + " train --corpus " + (dir / "bad.csv").string(), &err), 0);
  EXPECT_NE(err.find("row 3"), std::string::npos) << err;
  EXPECT_THROW(cli::cmd_train(quick_train(dir / "bad.csv", {}, "x"), dir), LoadError);
  fs::remove_all(dir);
}

TEST(Train, NonfiniteRunMarkedFailed) {
  const auto dir = fresh_dir("train_nan");
  const auto corpus = small_corpus(dir);
  auto opt = quick_train(corpus, {}, "diverge");
  opt.config.base_lr = 1e300;
  opt.seeds = 2;
  std::ostringstream log;
  const auto art = cli::cmd_train(opt, dir, log);
  EXPECT_FALSE(art.ok);
  const auto summary = read_json(dir / "diverge.summary.json");
  for (const auto& r : summary.at("runs")) {
    EXPECT_EQ(r.at("status"), "failed");
    EXPECT_TRUE(r.contains("error"));
  }
  EXPECT_TRUE(summary.at("mean").is_null());
  fs::remove_all(dir);
}

TEST(Report, SingleRun) {
  const auto dir = fresh_dir("report_single");
  const auto corpus = small_corpus(dir);
  cli::cmd_train(quick_train(corpus, dir / "corpus_test.csv", "solo"), dir);
  cli::ReportOptions r;
  r.runs = {(dir / "solo_seed1.metrics.jsonl").string()};
  const auto art = cli::cmd_report(r, dir);
  EXPECT_TRUE(art.ok);
  const auto rows = read_csv(dir / "report.ablation.csv");
  ASSERT_GT(rows.size(), 1u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"metric", "run", "value", "delta"}));
  for (std::size_t i = 1; i < rows.size(); ++i) {
    EXPECT_EQ(rows[i][1], "solo_seed1");
    EXPECT_EQ(rows[i][3], "0");
  }
  for (const char* f : {"solo_seed1.balance.csv", "solo_seed1.pr_pscore.csv", "solo_seed1.pr_maxprob.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  fs::remove_all(dir);
}

TEST(Report, JoinsAdaptiveAndFixedWithDelta) {
  const auto dir = fresh_dir("report_join");
  const auto corpus = small_corpus(dir, 0.5);
  cli::cmd_train(quick_train(corpus, dir / "corpus_test.csv", "adaptive"), dir);
  auto fixed = quick_train(corpus, dir / "corpus_test.csv", "fixed");
  fixed.config.threshold_mode = ThresholdMode::fixed;
  cli::cmd_train(fixed, dir);
  ASSERT_EQ(run_cli("--out " + dir.string() + " report --run " + (dir / "adaptive_seed1.metrics.jsonl").string() +
                    " --run " + (dir / "fixed_seed1.metrics.jsonl").string() + " --name join"),
            0);
  const auto rows = read_csv(dir / "join.ablation.csv");
  std::map<std::string, std::vector<std::vector<std::string>>> by_metric;
  for (std::size_t i = 1; i < rows.size(); ++i) by_metric[rows[i][0]].push_back(rows[i]);
  ASSERT_TRUE(by_metric.count("final_balance_std"));
  for (const auto& [metric, group] : by_metric) {
    ASSERT_EQ(group.size(), 2u) << metric;
    EXPECT_EQ(group[0][1], "adaptive_seed1");
    EXPECT_EQ(group[1][1], "fixed_seed1");
    EXPECT_NEAR(std::stod(group[1][3]), std::stod(group[1][2]) - std::stod(group[0][2]), 1e-12) << metric;
  }
  fs::remove_all(dir);
}

TEST(Report, MissingRunSkipped) {
  const auto dir = fresh_dir("report_missing");
  const auto corpus = small_corpus(dir);
  cli::cmd_train(quick_train(corpus, dir / "corpus_test.csv", "present"), dir);
  cli::ReportOptions r;
  r.runs = {(dir / "present_seed1.metrics.jsonl").string(), (dir / "absent.metrics.jsonl").string()};
  std::ostringstream log;
  const auto art = cli::cmd_report(r, dir, log);
  EXPECT_TRUE(art.ok);
  EXPECT_NE(log.str().find("absent.metrics.jsonl"), std::string::npos);
  const auto manifest = read_json(art.manifest);
  ASSERT_EQ(manifest.at("skipped").size(), 1u);
  for (std::size_t i = 1; const auto& row : read_csv(dir / "report.ablation.csv"))
    if (i++ > 1) EXPECT_EQ(row[1], "present_seed1");
  r.runs = {(dir / "absent.metrics.jsonl").string()};
  EXPECT_THROW(cli::cmd_report(r, dir, log), LoadError);
  fs::remove_all(dir);
}

TEST(Report, PScoreAucAboveMaxProbOnDefaultRecipe) {
  const auto dir = fresh_dir("report_auc");
  cli::GenOptions g;
  g.spec = CorpusSpec{4, 8, 2000, 6.0, 1.0, 1};
  cli::cmd_gen(g, dir);
  cli::TrainOptions t;
  t.corpus = (dir / "corpus.csv").string();
  t.test = (dir / "corpus_test.csv").string();
  t.config.seed = 1;
  cli::cmd_train(t, dir);
  cli::ReportOptions r;
  r.runs = {(dir / "run_seed1.metrics.jsonl").string()};
  cli::cmd_report(r, dir);
  double diff = 0.0;
  bool found = false;
  for (const auto& row : read_csv(dir / "report.ablation.csv"))
    if (row[0] == "p_score_auc_minus_max_prob_auc") {
      diff = std::stod(row[2]);
      found = true;
    }
  ASSERT_TRUE(found);
  EXPECT_GT(diff, 0.0);
  fs::remove_all(dir);
}
