#include "pbnn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>
#include <sstream>

#include "pbnn/checkpoint.hpp"
#include "pbnn/serialization.hpp"

namespace pbnn {

const char* version() { return PBNN_VERSION_STRING; }

namespace {

std::string num(double x, const char* fmt = "%.17g") {
  char buf[64];
  std::snprintf(buf, sizeof buf, fmt, x);
  return buf;
}

std::string backend_label(const RunConfig& cfg) {
  const auto numeric = cfg.numeric();
  if (!numeric.is_fixed()) return cfg.backend;
  return cfg.backend + " (activations " + numeric.activations.format().to_string() + ", parameters " +
         numeric.parameters.format().to_string() + ")";
}

bool all_in_range(const std::vector<EpochRecord>& records) {
  for (const auto& r : records) {
    if (!r.in_range) return false;
  }
  return true;
}

}  // namespace

std::string csv_header(const RunConfig& cfg) {
  return std::string("# pbnn ") + version() + " config=" + cfg.to_json() +
         "\nepoch,eta,v,train_loss,test_acc,wall_seconds\n";
}

std::string csv_row(const EpochRecord& r) {
  return std::to_string(r.epoch) + "," + num(r.eta) + "," + num(r.v) + "," + num(r.train_loss) + "," +
         num(r.test_acc) + "," + num(r.wall_seconds) + "\n";
}

std::string metrics_csv(const TrainRun& run) {
  std::string text = csv_header(run.config);
  for (const auto& r : run.records) text += csv_row(r);
  return text;
}

EpochTiming epoch_timing(const std::vector<EpochRecord>& records) {
  std::vector<double> t;
  for (const auto& r : records) {
    if (r.epoch > 0) t.push_back(r.wall_seconds);
  }
  EpochTiming out;
  if (t.empty()) return out;
  for (double x : t) out.mean += x;
  out.mean /= static_cast<double>(t.size());
  if (t.size() > 1) {
    double ss = 0.0;
    for (double x : t) ss += (x - out.mean) * (x - out.mean);
    out.stddev = std::sqrt(ss / static_cast<double>(t.size() - 1));
  }
  return out;
}

std::string summary_text(const TrainRun& run) {
  const auto& cfg = run.config;
  const auto timing = epoch_timing(run.records);
  std::ostringstream s;
  s << "pbnn " << version() << " run summary (host timings; not hardware figures)\n";
  s << "config: " << cfg.to_json() << "\n";
  s << "regime: " << to_string(cfg.regime) << "\n";
  s << "backend: " << backend_label(cfg) << "\n";
  s << "epochs completed: " << run.completed_epochs() << "/" << cfg.epochs << "\n";
  s << "final test accuracy: " << num(run.records.back().test_acc, "%.4f") << "\n";
  s << "host time per epoch (s): " << num(timing.mean, "%.3f") << " +/- " << num(timing.stddev, "%.3f")
    << "\n";
  s << "host training time (s): " << num(timing.mean * static_cast<double>(run.completed_epochs()), "%.3f")
    << "\n";
  s << "fixed-point tensors in range every epoch: " << (all_in_range(run.records) ? "yes" : "no") << "\n";
  if (cfg.regime == Regime::progressive) {
    s << "saturated fraction (|theta| > 0.99): " << num(run.records.back().saturated, "%.4f") << "\n";
  }
  s << "parameter memory (bytes, " << cfg.storage_bits() << "-bit storage):\n";
  char line[160];
  std::snprintf(line, sizeof line, "  %-14s %12s %12s %12s %12s %12s\n", "regime", "latent", "binary",
                "optimizer", "statistics", "total");
  s << line;
  const auto spec = cfg.network_spec();
  for (auto r : {Regime::deterministic, Regime::stochastic, Regime::progressive, Regime::real_valued}) {
    const auto m = parameter_memory(spec, r, cfg.storage_bits());
    std::snprintf(line, sizeof line, "  %-14s %12zu %12zu %12zu %12zu %12zu%s\n",
                  std::string(to_string(r)).c_str(), m.latent_bytes, m.binary_bytes, m.optimizer_bytes,
                  m.statistic_bytes, m.total(), r == cfg.regime ? "  <- this run" : "");
    s << line;
  }
  return s.str();
}

void write_artifacts(const TrainRun& run) {
  const std::filesystem::path dir(run.config.out);
  std::filesystem::create_directories(dir);
  io::write_text_atomic(dir / "metrics.csv", metrics_csv(run));
  save_checkpoint(run, run.config.checkpoint_path());
  if (binarizes(run.config.regime)) save_binary_params(extract_binary_params(run.net), dir / "binary_params.bin");
  io::write_text_atomic(dir / "summary.txt", summary_text(run));
}

namespace {

void progress(const TrainRun& run, const RunOptions& opts, std::ostream& out) {
  if (opts.quiet) return;
  const auto& r = run.records.back();
  char line[200];
  std::snprintf(line, sizeof line, "epoch %lld/%lld  eta=%.0e  v=%.2f  loss=%.4f  test_acc=%.4f  %.1fs\n",
                static_cast<long long>(r.epoch), static_cast<long long>(run.config.epochs), r.eta, r.v,
                r.train_loss, r.test_acc, r.wall_seconds);
  out << line << std::flush;
}

void finish_line(const TrainRun& run, std::ostream& out) {
  const auto timing = epoch_timing(run.records);
  const auto mem = parameter_memory(run.config.network_spec(), run.config.regime, run.config.storage_bits());
  out << "final_test_acc=" << num(run.records.back().test_acc, "%.4f")
      << " host_train_seconds=" << num(timing.mean * static_cast<double>(run.completed_epochs()), "%.3f")
      << " parameter_memory_bytes=" << mem.total() << " (" << to_string(run.config.regime) << ")\n";
}

/// Drives a run to completion, checkpointing after every epoch.
int drive(TrainRun& run, const DataSplits& data, const RunOptions& opts, std::ostream& out,
          std::ostream& err) {
  try {
    write_artifacts(run);
    progress(run, opts, out);
    continue_run(run, data, opts.stop_after_epoch, [&](const TrainRun& r) {
      write_artifacts(r);
      progress(r, opts, out);
    });
  } catch (const TrainingAborted& e) {
    err << "training aborted: " << e.what() << "; last completed epoch " << run.completed_epochs()
        << " is checkpointed at " << run.config.checkpoint_path() << "\n";
    return kExitAborted;
  }
  if (!run.finished()) {
    out << "stopped after epoch " << run.completed_epochs() << "; resume from "
        << run.config.checkpoint_path() << "\n";
    return kExitOk;
  }
  finish_line(run, out);
  return kExitOk;
}

}  // namespace

int cmd_train(const RunConfig& cfg, const RunOptions& opts, std::ostream& out, std::ostream& err) {
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    err << "invalid configuration: " << e.what() << "\n";
    return kExitConfig;
  }
  try {
    const auto data = load_data(cfg);
    auto run = TrainRun::start(cfg, data);
    return drive(run, data, opts, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

int cmd_resume(const std::filesystem::path& checkpoint, const std::optional<RunConfig>& expected,
               const RunOptions& opts, std::ostream& out, std::ostream& err) {
  TrainRun run;
  try {
    run = load_checkpoint(checkpoint);
  } catch (const std::exception& e) {
    err << "refusing to resume: " << e.what() << "\n";
    return kExitRefused;
  }
  if (expected) {
    if (expected->identity() != run.config.identity()) {
      err << "refusing to resume: configuration differs from the checkpoint\n  checkpoint: "
          << run.config.identity() << "\n  requested:  " << expected->identity() << "\n";
      return kExitRefused;
    }
    run.config.out = expected->out;
    run.config.checkpoint = expected->checkpoint;
    run.config.wall_clock = expected->wall_clock;
  }
  try {
    const auto data = load_data(run.config);
    if (!opts.quiet) out << "resuming at epoch " << run.completed_epochs() << "/" << run.config.epochs << "\n";
    return drive(run, data, opts, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

std::string sweep_table(const std::vector<SweepEntry>& entries) {
  struct Group {
    std::vector<const SweepEntry*> runs;
  };
  std::vector<std::pair<std::string, Group>> groups;
  for (const auto& e : entries) {
    const std::string key = std::string(to_string(e.config.regime)) + "|" + e.config.backend;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == key; });
    if (it == groups.end()) {
      groups.push_back({key, {}});
      it = std::prev(groups.end());
    }
    it->second.runs.push_back(&e);
  }
  std::ostringstream s;
  char line[256];
  std::snprintf(line, sizeof line, "%-14s %-8s %5s %22s %26s %16s\n", "regime", "backend", "runs",
                "test accuracy (%)", "host time/epoch (s)", "param memory (B)");
  s << line;
  for (const auto& [key, g] : groups) {
    const auto& cfg = g.runs.front()->config;
    std::vector<double> acc;
    std::vector<double> times;
    std::size_t failed = 0;
    for (const auto* e : g.runs) {
      if (!e->ok) {
        ++failed;
        continue;
      }
      acc.push_back(e->test_acc * 100.0);
    }
    // Pool epochs across seeds: every trained epoch is one timing sample.
    double tsum = 0.0, tss = 0.0;
    std::size_t tn = 0;
    for (const auto* e : g.runs) {
      if (e->ok) tn += static_cast<std::size_t>(e->config.epochs);
    }
    for (const auto* e : g.runs) {
      if (e->ok) tsum += e->timing.mean * static_cast<double>(e->config.epochs);
    }
    const double tmean = tn ? tsum / static_cast<double>(tn) : 0.0;
    for (const auto* e : g.runs) {
      if (!e->ok) continue;
      const double n = static_cast<double>(e->config.epochs);
      // Per-run sum of squares about the pooled mean.
      tss += (n - 1.0) * e->timing.stddev * e->timing.stddev + n * (e->timing.mean - tmean) * (e->timing.mean - tmean);
    }
    const double tstd = tn > 1 ? std::sqrt(tss / static_cast<double>(tn - 1)) : 0.0;
    std::string acc_text = "FAILED";
    if (!acc.empty()) {
      double m = 0.0;
      for (double a : acc) m += a;
      m /= static_cast<double>(acc.size());
      double v = 0.0;
      for (double a : acc) v += (a - m) * (a - m);
      const double sd = acc.size() > 1 ? std::sqrt(v / static_cast<double>(acc.size() - 1)) : 0.0;
      acc_text = acc.size() > 1 ? num(m, "%.2f") + " +/- " + num(sd, "%.2f") : num(m, "%.2f");
      if (failed) acc_text += " (" + std::to_string(failed) + " failed)";
    }
    const std::string time_text = acc.empty() ? "-" : num(tmean, "%.3f") + " +/- " + num(tstd, "%.3f");
    std::snprintf(line, sizeof line, "%-14s %-8s %5zu %22s %26s %16zu\n",
                  std::string(to_string(cfg.regime)).c_str(), cfg.backend.c_str(), g.runs.size(),
                  acc_text.c_str(), time_text.c_str(), g.runs.front()->memory.total());
    s << line;
  }
  s << "host timings from this machine; not comparable to accelerator figures\n";
  return s.str();
}

std::string sweep_csv(const std::vector<SweepEntry>& entries) {
  std::string text = "regime,backend,seed,status,test_acc,time_mean,time_std,memory_bytes\n";
  for (const auto& e : entries) {
    text += std::string(to_string(e.config.regime)) + "," + e.config.backend + "," +
            std::to_string(e.config.seed) + "," + (e.ok ? "ok" : "failed") + "," +
            (e.ok ? num(e.test_acc) : std::string("nan")) + "," + num(e.timing.mean) + "," +
            num(e.timing.stddev) + "," + std::to_string(e.memory.total()) + "\n";
  }
  return text;
}

int cmd_sweep(const std::vector<RunConfig>& configs, const std::filesystem::path& out_dir,
              const RunOptions& opts, std::ostream& out, std::ostream& err,
              std::vector<SweepEntry>* entries_out) {
  if (configs.size() < 2) {
    err << "a sweep needs at least two configurations\n";
    return kExitConfig;
  }
  for (const auto& cfg : configs) {
    try {
      cfg.validate();
    } catch (const std::exception& e) {
      err << "invalid configuration: " << e.what() << "\n";
      return kExitConfig;
    }
  }
  std::vector<SweepEntry> entries;
  std::map<std::string, DataSplits> cache;
  for (auto cfg : configs) {
    SweepEntry entry;
    cfg.out = (out_dir / (std::string(to_string(cfg.regime)) + "_" + cfg.backend + "_s" + std::to_string(cfg.seed))).string();
    cfg.checkpoint.clear();
    entry.config = cfg;
    entry.memory = parameter_memory(cfg.network_spec(), cfg.regime, cfg.storage_bits());
    if (!opts.quiet) out << "== " << to_string(cfg.regime) << " / " << cfg.backend << " / seed " << cfg.seed << "\n";
    try {
      auto data_cfg = cfg;
      data_cfg.regime = Regime::progressive;
      data_cfg.backend = "real32";
      data_cfg.frac_bits = data_cfg.param_frac_bits = 0;
      data_cfg.seed = 0;
      const auto key = data_cfg.identity();
      if (!cache.count(key)) cache.emplace(key, load_data(cfg));
      const auto& data = cache.at(key);
      auto run = TrainRun::start(cfg, data);
      std::ostringstream run_err;
      const int status = drive(run, data, opts, out, run_err);
      if (status != kExitOk || !run.finished()) {
        entry.error = run_err.str().empty() ? "run did not finish" : run_err.str();
      } else {
        entry.ok = true;
        entry.test_acc = run.records.back().test_acc;
        entry.timing = epoch_timing(run.records);
      }
    } catch (const std::exception& e) {
      entry.error = e.what();
    }
    if (!entry.ok) err << "run failed: " << entry.error << "\n";
    entries.push_back(entry);
  }
  std::filesystem::create_directories(out_dir);
  const auto table = sweep_table(entries);
  io::write_text_atomic(out_dir / "sweep.csv", sweep_csv(entries));
  io::write_text_atomic(out_dir / "sweep.txt", table);
  out << table;
  if (entries_out) *entries_out = entries;
  for (const auto& e : entries) {
    if (!e.ok) return kExitFailure;
  }
  return kExitOk;
}

}  // namespace pbnn
