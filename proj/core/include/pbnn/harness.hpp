#pragma once

// Run orchestration behind the command-line tool: artifacts, resume and
// regime sweeps. Every command returns a process exit status.

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "pbnn/trainer.hpp"

namespace pbnn {

const char* version();

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitAborted = 3,
  kExitRefused = 4,
};

struct RunOptions {
  std::optional<std::int64_t> stop_after_epoch;  // simulate an interruption
  bool quiet = false;                            // no per-epoch progress lines
};

/// "# pbnn <version> config=<json>" followed by the column names.
std::string csv_header(const RunConfig& cfg);
std::string csv_row(const EpochRecord& r);
std::string metrics_csv(const TrainRun& run);

struct EpochTiming {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation; 0 for a single epoch
};
/// Over the trained epochs (the anchor row is excluded).
EpochTiming epoch_timing(const std::vector<EpochRecord>& records);

std::string summary_text(const TrainRun& run);

/// metrics.csv, summary.txt and (binarizing regimes) binary_params.bin
/// under cfg.out; the checkpoint at cfg.checkpoint_path().
void write_artifacts(const TrainRun& run);

int cmd_train(const RunConfig& cfg, const RunOptions& opts, std::ostream& out, std::ostream& err);

/// Continues the run stored at `checkpoint`. When `expected` is given, its
/// numeric identity must equal the stored config or the resume is refused;
/// its output locations replace the stored ones.
int cmd_resume(const std::filesystem::path& checkpoint, const std::optional<RunConfig>& expected,
               const RunOptions& opts, std::ostream& out, std::ostream& err);

struct SweepEntry {
  RunConfig config;
  bool ok = false;
  std::string error;
  double test_acc = 0.0;
  EpochTiming timing;
  ParameterMemory memory;
};

/// One row per (regime, backend): accuracy (mean ± std over seeds), host
/// time per epoch (mean ± std over every epoch of every seed), memory.
std::string sweep_table(const std::vector<SweepEntry>& entries);
std::string sweep_csv(const std::vector<SweepEntry>& entries);

/// Runs each config in turn; a failing run is marked and the rest continue.
int cmd_sweep(const std::vector<RunConfig>& configs, const std::filesystem::path& out_dir,
              const RunOptions& opts, std::ostream& out, std::ostream& err,
              std::vector<SweepEntry>* entries = nullptr);

}  // namespace pbnn
