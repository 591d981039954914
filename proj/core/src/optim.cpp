#include "pbnn/optim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pbnn {

AdamState AdamState::for_shape(const Shape& shape, AdamConfig config) {
  return AdamState{Tensor(shape), Tensor(shape), 0, config};
}

void adam_step(Tensor& p, const Tensor& grad, AdamState& state, double eta) {
  if (p.shape() != grad.shape() || p.shape() != state.m.shape()) {
    throw DimensionError("adam_step: shape mismatch " + shape_to_string(p.shape()) + " / " +
                         shape_to_string(grad.shape()));
  }
  const auto& c = state.config;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.t));
  auto m = state.m.mutable_values();
  auto s = state.s.mutable_values();
  const auto g = grad.values();
  std::vector<double> updated(p.values().begin(), p.values().end());
  for (std::size_t i = 0; i < updated.size(); ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
    s[i] = c.beta2 * s[i] + (1.0 - c.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double s_hat = s[i] / bc2;
    updated[i] -= eta * m_hat / (std::sqrt(s_hat) + c.eps);
  }
  p = Tensor(p.shape(), std::move(updated), p.backend());
}

double lr_schedule(std::int64_t epoch) {
  if (epoch < 0) throw std::invalid_argument("lr_schedule: negative epoch");
  return std::pow(10.0, static_cast<double>(-3 - epoch / 20));
}

double v_schedule(std::int64_t epoch, std::int64_t total_epochs) {
  if (total_epochs < 1 || epoch < 0 || epoch >= total_epochs) {
    throw std::invalid_argument("v_schedule: epoch " + std::to_string(epoch) +
                                " outside [0, " + std::to_string(total_epochs) + ")");
  }
  if (total_epochs == 1 || epoch == 0) return 1.0;
  if (epoch == total_epochs - 1) return 1000.0;
  const double exponent =
      3.0 * static_cast<double>(epoch) / static_cast<double>(total_epochs - 1);
  return std::pow(10.0, exponent);
}

LossAndGrad cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels) {
  if (logits.rank() != 2 || logits.dim(0) != labels.size()) {
    throw DimensionError("cross_entropy: logits " + shape_to_string(logits.shape()) +
                         " vs " + std::to_string(labels.size()) + " labels");
  }
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  const auto z = logits.values();
  std::vector<double> grad(batch * classes);
  double total = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (labels[b] >= classes) {
      throw std::invalid_argument("cross_entropy: label " + std::to_string(labels[b]) +
                                  " out of range");
    }
    const double* row = z.data() + b * classes;
    const double zmax = *std::max_element(row, row + classes);
    double sum = 0.0;
    for (std::size_t j = 0; j < classes; ++j) sum += std::exp(row[j] - zmax);
    const double log_sum = std::log(sum);
    total += -(row[labels[b]] - zmax - log_sum);
    for (std::size_t j = 0; j < classes; ++j) {
      const double prob = std::exp(row[j] - zmax - log_sum);
      grad[b * classes + j] = (prob - (j == labels[b] ? 1.0 : 0.0)) / static_cast<double>(batch);
    }
  }
  return {total / static_cast<double>(batch), Tensor({batch, classes}, std::move(grad))};
}

}  // namespace pbnn
