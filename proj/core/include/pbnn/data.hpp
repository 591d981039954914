#pragma once

// CIFAR-10 ingestion, normalization, seeded batching and synthetic fixtures.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbnn/random.hpp"
#include "pbnn/tensor.hpp"

namespace pbnn {

class IngestionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Split : std::uint8_t { train, test };

struct Dataset {
  Tensor images;  // N × 3 × H × W, normalized
  std::vector<std::uint8_t> labels;
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
  Shape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
};

struct ChannelStats {
  double mean;
  double std;
};

struct NormalizationSpec {
  std::array<ChannelStats, 3> channels;

  /// Per-channel (mean, std) for R, G, B.
  static NormalizationSpec cifar10() {
    return {{{{0.4914, 0.2023}, {0.4822, 0.1994}, {0.4465, 0.2010}}}};
  }
  double normalize(std::size_t channel, std::uint8_t pixel) const {
    return (static_cast<double>(pixel) / 255.0 - channels[channel].mean) / channels[channel].std;
  }
};

inline constexpr std::size_t kCifarImageBytes = 3072;
inline constexpr std::size_t kCifarRecordBytes = 1 + kCifarImageBytes;

struct CifarLoadOptions {
  std::size_t train_subset = 0;  // 0 keeps the full split
  std::size_t test_subset = 0;
  std::uint64_t subset_seed = 0;
  NormalizationSpec normalization = NormalizationSpec::cifar10();
};

struct CifarSplits {
  Dataset train;
  Dataset test;
};

/// Reads data_batch_1..5.bin and test_batch.bin from the standard binary
/// release. Every file must hold a positive whole number of records.
CifarSplits load_cifar10(const std::filesystem::path& dir, const CifarLoadOptions& options = {});

/// Decodes one batch file (appending to images/labels); exposed for tests.
void read_cifar_batch(const std::filesystem::path& file, const NormalizationSpec& norm,
                      std::vector<double>& images, std::vector<std::uint8_t>& labels);

/// Deterministic subset of n samples (seeded permutation prefix, kept in
/// original order). n == 0 or n >= size returns the dataset unchanged.
Dataset subset(const Dataset& ds, std::size_t n, std::uint64_t seed);

/// Seeded per-epoch permutation cut into batches of batch_size; the final
/// partial batch is dropped.
std::vector<std::vector<std::size_t>> batches(std::size_t dataset_size, std::size_t batch_size,
                                              std::uint64_t seed, std::uint64_t epoch);

struct Augmentation {
  bool flip = false;  // horizontal flip with probability 1/2
  bool crop = false;  // 4-pixel zero-padded random crop
};

struct Batch {
  Tensor images;
  std::vector<std::uint8_t> labels;
};

/// Materializes the samples at indices; augmentation draws are keyed by
/// (key, position in batch).
Batch gather(const Dataset& ds, const std::vector<std::size_t>& indices,
             const Augmentation& augment = {}, const RandomKey& key = {});

struct SyntheticOptions {
  std::size_t samples = 80;
  std::size_t classes = 10;
  std::uint64_t seed = 0;
  double snr = 4.0;  // class-mean separation relative to unit pixel noise
  std::size_t image_size = 32;
  Split split = Split::train;
};

/// Gaussian class blobs: each class owns a fixed random template of
/// per-channel means (scaled by snr) plus unit Gaussian pixel noise.
/// Classes are assigned round-robin. snr = 0 carries no label signal.
Dataset synthetic_dataset(const SyntheticOptions& options);

}  // namespace pbnn
