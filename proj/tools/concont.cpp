// concont: gen | train | report
#ifdef CONCONT_VENDORED_CLI11
#include "CLI11.hpp"
#else
#include <CLI/CLI.hpp>
#endif

#include "concont/cli.hpp"

#include <iostream>
#include <map>

namespace {

using namespace concont;

const std::map<std::string, Strategy> kStrategies{{"ours", Strategy::ours},
                                                  {"hcp", Strategy::hcp},
                                                  {"hcpn", Strategy::hcpn},
                                                  {"supcon", Strategy::supcon},
                                                  {"unsupcon", Strategy::unsupcon}};
const std::map<std::string, ThresholdMode> kThresholdModes{{"adaptive", ThresholdMode::adaptive},
                                                           {"fixed", ThresholdMode::fixed}};
const std::map<std::string, PseudoMode> kPseudoModes{{"hard", PseudoMode::hard}, {"soft", PseudoMode::soft}};
const std::map<std::string, BranchMode> kBranchModes{{"three", BranchMode::three}, {"two", BranchMode::two}};
const std::map<std::string, bool> kDataModes{{"full", true}, {"partial-only", false}};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ConCont partial-label workbench"};
  app.require_subcommand(1);
  std::string out;
  app.add_option("--out", out, "Output root (default: $CONCONT_OUT_DIR or ./runs)");

  // gen
  cli::GenOptions gen;
  auto* g = app.add_subcommand("gen", "Synthesize a blob corpus with partial labels");
  g->add_option("--classes", gen.spec.n_classes)->capture_default_str();
  g->add_option("--dim", gen.spec.dim)->capture_default_str();
  g->add_option("--samples", gen.spec.n_samples)->capture_default_str();
  g->add_option("--sep", gen.spec.class_separation)->capture_default_str();
  g->add_option("--noise", gen.spec.noise_sigma)->capture_default_str();
  g->add_option("--q", gen.q, "Flip probability for each non-true candidate")->capture_default_str();
  g->add_option("--partial-frac", gen.partial_frac, "Fraction of rows keeping a partial mask")->capture_default_str();
  g->add_option("--seed", gen.spec.seed)->capture_default_str();
  g->add_option("--test-samples", gen.test_samples, "Held-out rows (0 = none)")->capture_default_str();
  g->add_option("--name", gen.name, "Output file stem")->capture_default_str();

  // train
  cli::TrainOptions tr;
  auto& c = tr.config;
  double tau_init = 0, tau_lower = 0, tau_upper = 0;
  std::string data_mode = "full";
  std::optional<double> key_weak, key_strong, key_mask;
  auto* t = app.add_subcommand("train", "Train one or more seeds on a corpus file");
  t->add_option("--corpus", tr.corpus)->required()->check(CLI::ExistingFile);
  t->add_option("--test", tr.test)->check(CLI::ExistingFile);
  t->add_option("--seeds", tr.seeds, "Number of consecutive seeds")->capture_default_str();
  t->add_option("--seed", c.seed, "First seed")->capture_default_str();
  t->add_option("--name", tr.name, "Output file stem")->capture_default_str();
  t->add_option("--epochs", c.epochs)->capture_default_str();
  t->add_option("--batch-size", c.batch_size)->capture_default_str();
  t->add_option("--lr", c.base_lr)->capture_default_str();
  t->add_option("--momentum", c.sgd_momentum)->capture_default_str();
  t->add_option("--weight-decay", c.weight_decay)->capture_default_str();
  t->add_option("--twin-momentum", c.twin_momentum)->capture_default_str();
  t->add_option("--lambda", c.weights.lambda)->capture_default_str();
  t->add_option("--mu", c.weights.mu)->capture_default_str();
  t->add_option("--temperature", c.weights.temperature)->capture_default_str();
  t->add_option("--queue", c.queue_capacity)->capture_default_str();
  t->add_option("--hidden", c.hidden_width)->capture_default_str();
  t->add_option("--layers", c.hidden_layers)->capture_default_str();
  t->add_option("--proj-dim", c.proj_dim)->capture_default_str();
  t->add_option("--weak-sigma", c.augment.weak_sigma)->capture_default_str();
  t->add_option("--strong-sigma", c.augment.strong_sigma)->capture_default_str();
  t->add_option("--mask-frac", c.augment.strong_mask_frac)->capture_default_str();
  t->add_option("--key-weak-sigma", key_weak, "Separate key-branch augmentation (three-branch only)");
  t->add_option("--key-strong-sigma", key_strong);
  t->add_option("--key-mask-frac", key_mask);
  auto* o_init = t->add_option("--tau-init", tau_init);
  auto* o_lower = t->add_option("--tau-lower", tau_lower);
  auto* o_upper = t->add_option("--tau-upper", tau_upper);
  t->add_option("--gamma", c.thresholds.gamma)->capture_default_str();
  t->add_option("--count-ema", c.thresholds.count_ema, "EMA factor for per-class counts (0 = raw)")->capture_default_str();
  t->add_option("--partial-per-batch", c.partial_per_batch, "Fixed partial rows per batch (0 = pooled)")->capture_default_str();
  t->add_option("--confidence-epoch", c.confidence_epoch)->capture_default_str();
  std::string strategy = "ours", threshold_mode = "adaptive", pseudo_mode = "hard", branch_mode = "three";
  t->add_option("--strategy", strategy)->check(CLI::IsMember(kStrategies))->capture_default_str();
  t->add_option("--threshold-mode", threshold_mode)->check(CLI::IsMember(kThresholdModes))->capture_default_str();
  t->add_option("--pseudo-mode", pseudo_mode)->check(CLI::IsMember(kPseudoModes))->capture_default_str();
  t->add_option("--branch-mode", branch_mode)->check(CLI::IsMember(kBranchModes))->capture_default_str();
  t->add_option("--mode", data_mode, "full | partial-only")->check(CLI::IsMember(kDataModes))->capture_default_str();
  t->add_flag("--no-l-reg", c.disable_l_reg);
  t->add_flag("--no-l-reg-prime", c.disable_l_reg_prime);
  t->add_flag("--standard-ce", c.use_standard_ce, "Random candidate as a one-hot target");

  // report
  cli::ReportOptions rep;
  auto* r = app.add_subcommand("report", "P-R, balance and ablation CSVs from metrics files");
  r->add_option("--run", rep.runs, "Metrics JSONL; repeatable, first is the delta baseline")->required();
  r->add_option("--name", rep.name)->capture_default_str();
  r->add_option("--pr-points", rep.pr_points)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    const auto root = cli::output_root(out);
    cli::Artifacts art;
    if (*g) {
      art = cli::cmd_gen(gen, root);
    } else if (*t) {
      c.use_unlabeled = kDataModes.at(data_mode);
      c.strategy = kStrategies.at(strategy);
      c.threshold_mode = kThresholdModes.at(threshold_mode);
      c.pseudo_mode = kPseudoModes.at(pseudo_mode);
      c.branch_mode = kBranchModes.at(branch_mode);
      if (*o_init) c.thresholds.init = tau_init;
      if (*o_lower) c.thresholds.lower = tau_lower;
      if (*o_upper) c.thresholds.upper = tau_upper;
      if (key_weak || key_strong || key_mask) {
        AugmentConfig k = c.augment;
        k.weak_sigma = key_weak.value_or(k.weak_sigma);
        k.strong_sigma = key_strong.value_or(k.strong_sigma);
        k.strong_mask_frac = key_mask.value_or(k.strong_mask_frac);
        c.key_augment = k;
      }
      art = cli::cmd_train(tr, root);
    } else {
      art = cli::cmd_report(rep, root);
    }
    for (const auto& f : art.files) std::cout << f.string() << '\n';
    std::cout << art.manifest.string() << '\n';
    return art.ok ? 0 : 1;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
