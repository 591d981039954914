#pragma once

// Trained binary parameters and the plain binary-weight inference path.
// Batch normalization + sign pairs are folded into per-channel thresholds.

#include <cstdint>
#include <filesystem>
#include <variant>
#include <vector>

#include "pbnn/network.hpp"

namespace pbnn {

struct BinaryConv {
  std::size_t in_channels = 0;
  std::size_t filters = 0;
  ConvGeometry geometry;
  std::vector<std::int8_t> weights;  // filters × in_channels × k × k, {−1,+1}
  std::vector<std::int8_t> bias;     // filters, {−1,+1}
};

struct BinaryFc {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<std::int8_t> weights;  // outputs × inputs, {−1,+1}
  std::vector<std::int8_t> bias;
};

/// Non-binarized layer (the classifier); weights copied as real values.
struct RealFc {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  std::vector<double> weights;
  std::vector<double> bias;
};

/// Folded BN followed by sign. direction is +1 (γ > 0: fire when x > T),
/// −1 (γ < 0: fire when x < T) or 0 (γ = 0: normalization kept unfolded).
struct ThresholdSign {
  std::vector<double> threshold;
  std::vector<std::int8_t> direction;
  std::vector<double> gamma, beta, mean, std;  // consulted only where direction == 0
};

/// Eval-mode BN without a following sign.
struct AffineNorm {
  std::vector<double> gamma, beta, mean, std;
};

struct SignActivation {};

struct BinaryPool {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

using BinaryOp =
    std::variant<BinaryConv, BinaryFc, RealFc, ThresholdSign, AffineNorm, SignActivation, BinaryPool>;

struct BinaryParams {
  Shape input_shape;
  std::size_t classes = 10;
  Backend input_backend = Backend::real();
  std::vector<BinaryOp> ops;

  /// Every binarized entry is ±1 and op shapes chain; throws DimensionError otherwise.
  void validate() const;
  /// Count of {−1,+1} entries across binarized layers.
  std::size_t binary_entries() const;
};

/// Signs of every binarized layer's θ (sign of P, or of the shadow weights;
/// θ ≤ 0 maps to −1), real classifier copied, BN folded into thresholds.
/// Pure read of the network.
BinaryParams extract_binary_params(const Network& net);

/// Class index for one C×H×W image; ties resolve to the lowest index.
std::size_t binary_infer(const BinaryParams& params, const Tensor& image);
/// Logits for a B×C×H×W batch.
Tensor binary_logits(const BinaryParams& params, const Tensor& batch);
double evaluate(const BinaryParams& params, const Dataset& ds, std::size_t batch_size = 100);

void save_binary_params(const BinaryParams& params, const std::filesystem::path& path);
BinaryParams load_binary_params(const std::filesystem::path& path);

}  // namespace pbnn
