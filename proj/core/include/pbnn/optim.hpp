#pragma once

#include <cstdint>
#include <span>

#include "pbnn/tensor.hpp"

namespace pbnn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates are always real-valued, whatever the parameter backend.
struct AdamState {
  Tensor m;
  Tensor s;
  std::uint64_t t = 0;
  AdamConfig config;

  static AdamState for_shape(const Shape& shape, AdamConfig config = {});
};

/// One bias-corrected Adam step on p. The update is computed in double
/// precision and written back through p's backend (quantized if fixed).
void adam_step(Tensor& p, const Tensor& grad, AdamState& state, double eta);

/// η = 1e-3 · 10^(−⌊epoch / 20⌋)
double lr_schedule(std::int64_t epoch);

/// Log-linear scale schedule from v = 1 at epoch 0 to v = 1000 at the last
/// epoch. A single-epoch run stays at v = 1.
double v_schedule(std::int64_t epoch, std::int64_t total_epochs);

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad_logits;  // B × classes, real
};

/// Mean softmax cross-entropy over the batch; gradient is (softmax − onehot)/B.
/// Throws std::invalid_argument for labels outside [0, classes).
LossAndGrad cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels);

}  // namespace pbnn
