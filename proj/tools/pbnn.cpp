// pbnn: train, resume and sweep binarized networks.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

#include "pbnn/harness.hpp"

namespace {

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

struct Flags {
  pbnn::RunConfig cfg;
  std::string regime = "progressive";
  std::string wall_clock = "on";
  std::int64_t stop_after = -1;
  bool quiet = false;

  void attach(CLI::App* app, bool with_regime) {
    if (with_regime) {
      app->add_option("--regime", regime, "deterministic | stochastic | progressive | real")
          ->check(CLI::IsMember({"deterministic", "stochastic", "progressive", "real"}));
      app->add_option("--backend", cfg.backend, "real32 | fx8 | fx16")
          ->check(CLI::IsMember({"real32", "fx8", "fx16"}));
      app->add_option("--seed", cfg.seed, "run seed (initialisation, shuffling, draws)");
    }
    app->add_option("--frac-bits", cfg.frac_bits, "activation fraction bits (0: backend default)");
    app->add_option("--param-frac-bits", cfg.param_frac_bits, "parameter fraction bits (0: backend default)");
    app->add_option("--epochs", cfg.epochs, "training epochs");
    app->add_option("--batch-size", cfg.batch_size, "batch size");
    app->add_option("--arch", cfg.arch, "vgg | tiny")->check(CLI::IsMember({"vgg", "tiny"}));
    app->add_option("--data-dir", cfg.data_dir, "CIFAR-10 binary directory (omit for synthetic data)");
    app->add_option("--subset", cfg.subset, "train subset size (0: all)");
    app->add_option("--test-subset", cfg.test_subset, "test subset size (0: all)");
    app->add_option("--subset-seed", cfg.subset_seed, "seed for subsets and synthetic data");
    app->add_option("--synthetic-train", cfg.synthetic_train, "synthetic train samples");
    app->add_option("--synthetic-test", cfg.synthetic_test, "synthetic test samples");
    app->add_option("--snr", cfg.synthetic_snr, "synthetic class separation");
    app->add_option("--image-size", cfg.image_size, "synthetic image side");
    app->add_option("--t-clip", cfg.t_clip, "straight-through clipping threshold");
    app->add_option("--bn-momentum", cfg.bn_momentum, "batch-norm running-statistic momentum");
    app->add_option("--bn-epsilon", cfg.bn_epsilon, "batch-norm epsilon");
    app->add_flag("--flip", cfg.augment_flip, "random horizontal flips");
    app->add_flag("--crop", cfg.augment_crop, "random 4-pixel padded crops");
    app->add_option("--out", cfg.out, "output directory");
    app->add_option("--checkpoint", cfg.checkpoint, "checkpoint path (default <out>/checkpoint.bin)");
    app->add_option("--wall-clock", wall_clock, "on | off (off records 0 s, for byte-comparable CSVs)")
        ->check(CLI::IsMember({"on", "off"}));
    app->add_option("--stop-after-epoch", stop_after, "stop once this many epochs are complete");
    app->add_flag("--quiet", quiet, "no per-epoch progress");
  }

  pbnn::RunConfig config() const {
    auto c = cfg;
    c.regime = pbnn::parse_regime(regime);
    c.wall_clock = wall_clock == "on";
    return c;
  }

  pbnn::RunOptions options() const {
    pbnn::RunOptions o;
    if (stop_after >= 0) o.stop_after_epoch = stop_after;
    o.quiet = quiet;
    return o;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Progressive and conventional binarized network training"};
  app.set_version_flag("--version", pbnn::version());
  app.require_subcommand(1);

  Flags train;
  bool resume = false;
  auto* train_cmd = app.add_subcommand("train", "train one configuration");
  train.attach(train_cmd, true);
  train_cmd->add_flag("--resume", resume, "continue from --checkpoint; the config must match");

  std::string checkpoint;
  bool resume_quiet = false;
  std::int64_t resume_stop = -1;
  auto* resume_cmd = app.add_subcommand("resume", "continue a checkpointed run with its stored config");
  resume_cmd->add_option("checkpoint", checkpoint, "checkpoint file")->required();
  resume_cmd->add_option("--stop-after-epoch", resume_stop, "stop once this many epochs are complete");
  resume_cmd->add_flag("--quiet", resume_quiet, "no per-epoch progress");

  Flags sweep;
  std::string regimes = "deterministic,stochastic,progressive";
  std::string backends = "real32";
  std::string seeds = "1";
  auto* sweep_cmd = app.add_subcommand("sweep", "regime x backend x seed comparison table");
  sweep.attach(sweep_cmd, false);
  sweep.cfg.out = "runs/sweep";
  sweep_cmd->add_option("--regimes", regimes, "comma-separated regimes");
  sweep_cmd->add_option("--backends", backends, "comma-separated backends");
  sweep_cmd->add_option("--seeds", seeds, "comma-separated seeds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      const auto cfg = train.config();
      if (cfg.synthetic() && !train.quiet) std::cout << "no --data-dir given; using synthetic data\n";
      if (resume) return pbnn::cmd_resume(cfg.checkpoint_path(), cfg, train.options(), std::cout, std::cerr);
      return pbnn::cmd_train(cfg, train.options(), std::cout, std::cerr);
    }
    if (*resume_cmd) {
      pbnn::RunOptions opts;
      if (resume_stop >= 0) opts.stop_after_epoch = resume_stop;
      opts.quiet = resume_quiet;
      return pbnn::cmd_resume(checkpoint, std::nullopt, opts, std::cout, std::cerr);
    }
    std::vector<pbnn::RunConfig> configs;
    for (const auto& r : split_list(regimes)) {
      for (const auto& b : split_list(backends)) {
        for (const auto& s : split_list(seeds)) {
          auto cfg = sweep.config();
          cfg.regime = pbnn::parse_regime(r);
          cfg.backend = b;
          cfg.seed = std::stoull(s);
          configs.push_back(cfg);
        }
      }
    }
    return pbnn::cmd_sweep(configs, sweep.cfg.out, sweep.options(), std::cout, std::cerr);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return pbnn::kExitConfig;
  }
}
