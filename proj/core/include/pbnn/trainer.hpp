#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <vector>

#include "pbnn/binary_params.hpp"
#include "pbnn/config.hpp"
#include "pbnn/data.hpp"
#include "pbnn/network.hpp"

namespace pbnn {

/// Raised when a training loss is not finite; carries the batch position.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(std::int64_t epoch, std::size_t batch, double loss);
  std::int64_t epoch;
  std::size_t batch;
  double loss;
};

struct EpochRecord {
  std::int64_t epoch = 0;  // 0 is the pre-training anchor; k is after k trained epochs
  double eta = 0.0;
  double v = 1.0;
  double train_loss = 0.0;  // NaN on the anchor row
  double test_acc = 0.0;
  double wall_seconds = 0.0;
  bool in_range = true;
  double saturated = 0.0;  // fraction of binarized entries with |pwl(P, v)| > 0.99
};

struct Schedule {
  double eta;
  double v;

  /// η and v for 0-based training epoch `epoch` of `total`.
  static Schedule at(std::int64_t epoch, std::int64_t total);
};

struct DataSplits {
  Dataset train;
  Dataset test;
};

/// CIFAR-10 from cfg.data_dir (with subsets) or the synthetic fixture.
DataSplits load_data(const RunConfig& cfg);

ForwardContext make_context(const RunConfig& cfg, const Network& net, double v, bool training,
                            std::int64_t epoch = 0, std::size_t batch = 0);

/// One pass over the shuffled training batches: forward, cross-entropy,
/// backward, Adam. Returns the mean training loss.
double train_epoch(Network& net, const Dataset& train, const RunConfig& cfg, std::int64_t epoch,
                   const Schedule& schedule);

/// Accuracy of the deployable model: binary parameters and threshold
/// inference for binarizing regimes, the real forward otherwise.
double test_accuracy(const Network& net, const Dataset& test, const RunConfig& cfg, double v);

struct TrainRun {
  RunConfig config;
  Network net;
  std::vector<EpochRecord> records;

  std::int64_t completed_epochs() const {
    return records.empty() ? 0 : static_cast<std::int64_t>(records.size()) - 1;
  }
  bool finished() const { return completed_epochs() >= config.epochs; }

  /// Fresh network plus the anchor row.
  static TrainRun start(const RunConfig& cfg, const DataSplits& data);
};

/// Trains epochs until the run finishes or `stop_after` epochs are complete.
/// on_epoch runs after every record is appended (checkpoints, CSV rows).
void continue_run(TrainRun& run, const DataSplits& data, std::optional<std::int64_t> stop_after = {},
                  const std::function<void(const TrainRun&)>& on_epoch = {});

}  // namespace pbnn
