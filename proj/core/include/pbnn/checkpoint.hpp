#pragma once

#include <filesystem>

#include "pbnn/trainer.hpp"

namespace pbnn {

/// Versioned container with the run config, per-epoch records, every
/// stored tensor (raw integers for fixed-point), and Adam moments and step
/// counts. Randomness is keyed by (seed, epoch, batch), so the epoch counter
/// is the whole RNG state. Written atomically.
void save_checkpoint(const TrainRun& run, const std::filesystem::path& path);

/// Throws io::FormatError on corruption, version or layout mismatch.
TrainRun load_checkpoint(const std::filesystem::path& path);

}  // namespace pbnn
