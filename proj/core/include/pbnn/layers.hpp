#pragma once

// Forward and backward passes for convolution, fully-connected, batch
// normalization, activation and max pooling. Every forward returns the
// output together with a tape entry holding exactly what its backward
// needs; backward passes are pure functions of (gradient, tape, layer).

#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

#include "pbnn/binarize.hpp"
#include "pbnn/optim.hpp"
#include "pbnn/random.hpp"
#include "pbnn/tensor.hpp"

namespace pbnn {

enum class Regime : std::uint8_t { deterministic, stochastic, progressive, real_valued };

std::string_view to_string(Regime regime);
/// Accepts "deterministic", "stochastic", "progressive", "real".
Regime parse_regime(std::string_view name);
inline bool binarizes(Regime r) { return r != Regime::real_valued; }

/// Per-pass settings shared by every layer of one forward.
struct ForwardContext {
  Regime regime = Regime::progressive;
  double v = 1.0;
  SteConfig ste{};
  Backend activations = Backend::real();
  bool training = false;
  RandomKey key{};  // stochastic draws; stream is set per layer

  /// BN + sign folds into a threshold compare once v is large and no
  /// gradient flows through the pass.
  bool use_bn_shortcut() const {
    return regime == Regime::progressive && !training && v >= kBnShortcutScale;
  }

  static constexpr double kBnShortcutScale = 500.0;
};

/// Learnable tensor: latent P (progressive), shadow weights (det/stoch) or
/// plain weights (real-valued), stored in the parameter backend.
struct Param {
  Tensor value;
  Tensor grad;
  AdamState adam;

  static Param make(Tensor value);
};

/// Weights actually used by a pass, plus dθ/dP per element.
struct EffectiveWeights {
  Tensor theta;
  std::vector<double> factor;
};

EffectiveWeights effective_weights(const Tensor& p, bool binarized, const ForwardContext& ctx,
                                   std::uint64_t stream);

// ---------------------------------------------------------------------------
// Convolution

struct ConvLayer {
  std::size_t in_channels = 0;
  std::size_t filters = 0;
  ConvGeometry geometry;
  bool binarized = true;
  std::uint64_t stream = 0;
  Param weight;  // filters × in_channels × k × k
  Param bias;    // filters

  static ConvLayer make(std::size_t in_channels, std::size_t filters, ConvGeometry geometry,
                        bool binarized, const Backend& storage);
};

struct ConvTape {
  Tensor input;  // B × C × H × W
  EffectiveWeights weight;
  EffectiveWeights bias;
};

struct ConvGrads {
  Tensor grad_in;
  Tensor grad_weight;
  Tensor grad_bias;
};

std::pair<Tensor, ConvTape> conv_forward(const Tensor& x, const ConvLayer& layer,
                                         const ForwardContext& ctx);
/// grad_in is left empty when compute_grad_in is false (first layer).
ConvGrads conv_backward(const Tensor& grad_out, const ConvTape& tape, const ConvLayer& layer,
                        bool compute_grad_in = true);

// ---------------------------------------------------------------------------
// Fully connected

struct FcLayer {
  std::size_t inputs = 0;
  std::size_t outputs = 0;
  bool binarized = true;
  std::uint64_t stream = 0;
  Param weight;  // outputs × inputs
  Param bias;    // outputs

  static FcLayer make(std::size_t inputs, std::size_t outputs, bool binarized,
                      const Backend& storage);
};

struct FcTape {
  Tensor input;  // B × inputs (flattened)
  Shape input_shape;
  EffectiveWeights weight;
  EffectiveWeights bias;
};

struct FcGrads {
  Tensor grad_in;  // original input shape
  Tensor grad_weight;
  Tensor grad_bias;
};

/// Flattens every axis after the batch axis.
std::pair<Tensor, FcTape> fc_forward(const Tensor& x, const FcLayer& layer,
                                     const ForwardContext& ctx);
FcGrads fc_backward(const Tensor& grad_out, const FcTape& tape, const FcLayer& layer);

// ---------------------------------------------------------------------------
// Batch normalization over axis 1 of B × C [× H × W].

struct BatchNormState {
  std::size_t channels = 0;
  Param gamma;
  Param beta;
  Tensor running_mean;  // μ_r
  Tensor running_std;   // σ_r = sqrt(running variance + ε)
  double momentum = 0.1;
  double epsilon = 1e-5;

  static BatchNormState make(std::size_t channels, const Backend& param_storage,
                             const Backend& stat_storage, double momentum = 0.1,
                             double epsilon = 1e-5);
};

struct BnTape {
  Tensor x_hat;  // normalized input, real
  std::vector<double> inv_std;
};

struct BnGrads {
  Tensor grad_in;
  Tensor grad_gamma;
  Tensor grad_beta;
};

/// Training mode normalizes with batch statistics and folds them into the
/// running estimates (new = (1 − momentum)·old + momentum·batch, unbiased
/// variance); eval mode uses the running estimates. Output is quantized
/// into x's backend.
std::pair<Tensor, BnTape> bn_forward(const Tensor& x, BatchNormState& state, bool training);
/// Eval-mode forward; leaves state untouched.
Tensor bn_forward_eval(const Tensor& x, const BatchNormState& state);
BnGrads bn_backward(const Tensor& grad_out, const BnTape& tape, const BatchNormState& state);

/// Per-channel threshold T = μ_r − σ_r·β/γ.
std::vector<double> bn_thresholds(const BatchNormState& state);

/// sign(BN_eval(I)) computed as XNOR(I > T, γ > 0). A γ = 0 channel falls
/// back to the full normalization followed by sign.
Tensor bn_sign_shortcut(const Tensor& input, const BatchNormState& state);

// ---------------------------------------------------------------------------
// Activation (regime-dependent binarization / ReLU)

struct ActivationTape {
  std::vector<std::uint8_t> pass;  // 1 where the surrogate derivative is non-zero
  double slope = 1.0;
};

std::pair<Tensor, ActivationTape> activation_forward(const Tensor& x, const ForwardContext& ctx,
                                                     std::uint64_t stream);
Tensor activation_backward(const Tensor& grad_out, const ActivationTape& tape);

// ---------------------------------------------------------------------------
// Max pooling, non-overlapping windows. Ties go to the first index in scan order.

struct PoolTape {
  Shape input_shape;
  std::vector<std::uint32_t> argmax;  // flat input index per output element
};

std::pair<Tensor, PoolTape> maxpool_forward(const Tensor& x, std::size_t kernel = 2,
                                            std::size_t stride = 2);
Tensor maxpool_backward(const Tensor& grad_out, const PoolTape& tape);

}  // namespace pbnn
