#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include "pbnn/data.hpp"
#include "pbnn/layers.hpp"

namespace pbnn {

/// One row of an architecture table. Convolution and hidden fully-connected
/// rows expand to layer → batch norm → activation; the final row is a plain
/// real-valued classifier.
struct LayerSpec {
  enum class Kind : std::uint8_t { conv, max_pool, fc };

  Kind kind = Kind::conv;
  std::size_t units = 0;  // filters (conv) or neurons (fc)
  ConvGeometry geometry{};
  bool binarized = true;

  static LayerSpec conv(std::size_t filters, ConvGeometry g = {3, 1, 1}) {
    return {Kind::conv, filters, g, true};
  }
  static LayerSpec max_pool(std::size_t kernel = 2, std::size_t stride = 2) {
    return {Kind::max_pool, 0, {kernel, stride, 0}, true};
  }
  static LayerSpec fc(std::size_t neurons, bool binarized = true) {
    return {Kind::fc, neurons, {}, binarized};
  }

  std::string describe() const;
};

struct NetworkSpec {
  std::string name = "custom";
  Shape input_shape{3, 32, 32};
  std::size_t classes = 10;
  std::vector<LayerSpec> layers;

  /// Output shape of every row; throws DimensionError if the chain breaks
  /// or the last row does not produce `classes` outputs.
  std::vector<Shape> output_shapes() const;

  /// The 128-128-P-128-256-P-256-512-P-1024-1024-10 VGG variant on 3×32×32.
  static NetworkSpec vgg();
  /// conv16-conv32-pool-fc128-fc10, for desk-scale runs.
  static NetworkSpec tiny(std::size_t image_size = 32);
  /// "vgg" or "tiny".
  static NetworkSpec named(const std::string& name, std::size_t image_size = 32);
};

struct ActivationLayer {
  std::uint64_t stream = 0;
};

struct MaxPoolLayer {
  std::size_t kernel = 2;
  std::size_t stride = 2;
};

using Layer = std::variant<ConvLayer, FcLayer, BatchNormState, ActivationLayer, MaxPoolLayer>;
using TapeEntry = std::variant<ConvTape, FcTape, BnTape, ActivationTape, PoolTape>;
using ForwardTape = std::vector<TapeEntry>;

/// Storage formats: activations/forward tensors and stored parameters.
struct NumericConfig {
  Backend activations = Backend::real();
  Backend parameters = Backend::real();

  bool is_fixed() const { return activations.is_fixed(); }
};

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

class Network {
 public:
  static Network build(const NetworkSpec& spec, const NumericConfig& numeric, std::uint64_t seed,
                       BatchNormOptions bn = {});

  const NetworkSpec& spec() const { return spec_; }
  const NumericConfig& numeric() const { return numeric_; }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  /// Runs every layer. With ctx.training, batch-norm running statistics
  /// are updated and, when tape is non-null, backward state is recorded.
  Tensor forward(const Tensor& x, const ForwardContext& ctx, ForwardTape* tape = nullptr);
  /// Eval-mode forward that never mutates the network.
  Tensor infer(const Tensor& x, const ForwardContext& ctx) const;

  /// Fills every Param::grad from the loss gradient w.r.t. the logits.
  void backward(const Tensor& grad_logits, const ForwardTape& tape);

  void adam_step(double eta);

  /// Visits every learnable tensor with a stable name ("L3.weight", ...).
  void for_each_param(const std::function<void(const std::string&, Param&)>& fn);
  void for_each_param(const std::function<void(const std::string&, const Param&)>& fn) const;
  /// Visits every stored tensor, learnable or not (running statistics).
  void for_each_state(const std::function<void(const std::string&, Tensor&)>& fn);
  void for_each_state(const std::function<void(const std::string&, const Tensor&)>& fn) const;

  /// True when every stored and learnable tensor is on its backend's grid
  /// and inside its range (always checks finiteness for real backends).
  bool all_in_range() const;

  /// Fraction of binarized-layer entries whose progressive weight
  /// |pwl(P, v)| exceeds 0.99.
  double saturated_fraction(double v) const;

 private:
  NetworkSpec spec_;
  NumericConfig numeric_;
  std::vector<Layer> layers_;
};

std::vector<std::size_t> argmax_rows(const Tensor& logits);

/// Fraction of argmax-correct predictions from the training-graph forward.
double evaluate(const Network& net, const Dataset& ds, const ForwardContext& ctx,
                std::size_t batch_size = 100);

// ---------------------------------------------------------------------------
// Parameter-memory accounting

struct ParameterMemory {
  std::size_t latent_bytes = 0;     // P / shadow / plain weights (incl. BN affine)
  std::size_t binary_bytes = 0;     // separate {−1,+1} set, bit-packed
  std::size_t optimizer_bytes = 0;  // Adam first and second moments (fp32)
  std::size_t statistic_bytes = 0;  // BN running mean / std

  std::size_t total() const {
    return latent_bytes + binary_bytes + optimizer_bytes + statistic_bytes;
  }
};

/// Bytes of stored tensors for a regime. Element width is the parameter
/// format's (4 bytes for the fp32 reference). Conventional binarized
/// regimes keep a second, binary copy of every binarized weight.
ParameterMemory parameter_memory(const NetworkSpec& spec, Regime regime, int storage_bits);

}  // namespace pbnn
