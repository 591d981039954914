#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "pbnn/layers.hpp"
#include "pbnn/network.hpp"

namespace pbnn {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Everything that determines a run's numbers. Output locations are kept
/// out of identity() so a resumed run may write elsewhere.
struct RunConfig {
  Regime regime = Regime::progressive;
  std::string backend = "real32";  // real32 | fx8 | fx16
  int frac_bits = 0;               // 0: backend default (fx8 → 4, fx16 → 8)
  int param_frac_bits = 0;         // 0: backend default (fx8 → 6, fx16 → 14)
  std::int64_t epochs = 10;
  std::size_t batch_size = 8;
  std::uint64_t seed = 1;
  std::string arch = "tiny";  // vgg | tiny

  std::string data_dir;  // CIFAR-10 binary release; empty selects synthetic data
  std::size_t subset = 0;       // train subset (0: full split)
  std::size_t test_subset = 0;  // test subset (0: full split)
  std::uint64_t subset_seed = 0;
  std::size_t synthetic_train = 400;
  std::size_t synthetic_test = 200;
  double synthetic_snr = 4.0;
  std::size_t image_size = 32;  // synthetic only; CIFAR-10 images are 32×32

  double t_clip = 1.0;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
  bool augment_flip = false;
  bool augment_crop = false;

  std::string out = "runs/default";
  std::string checkpoint;  // empty: <out>/checkpoint.bin
  bool wall_clock = true;  // false writes 0 wall time, making CSVs byte-comparable

  bool synthetic() const { return data_dir.empty(); }
  std::string checkpoint_path() const { return checkpoint.empty() ? out + "/checkpoint.bin" : checkpoint; }

  /// Throws ConfigError describing the first invalid field.
  void validate() const;

  NumericConfig numeric() const;
  NetworkSpec network_spec() const;
  /// Bits per stored parameter element (32 for real32).
  int storage_bits() const;

  /// Full config as compact JSON (stable key order).
  std::string to_json() const;
  /// Only the fields that affect the numbers (no output paths, no wall clock).
  std::string identity() const;
  static RunConfig from_json(const std::string& text);
};

}  // namespace pbnn
