#include "pbnn/binarize.hpp"

#include <algorithm>
#include <cmath>

namespace pbnn {

double hard_sigmoid(double theta) { return std::clamp((theta + 1.0) / 2.0, 0.0, 1.0); }

double pwl(double p, double v) { return std::clamp(v * p, -1.0, 1.0); }

double pwl_derivative(double p, double v) { return std::abs(v * p) < 1.0 ? v : 0.0; }

namespace {

template <typename Fn>
Tensor map(const Tensor& in, Fn&& fn) {
  std::vector<double> out(in.size());
  const auto x = in.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i], i);
  return Tensor(in.shape(), std::move(out), in.backend());
}

template <typename Fn>
Tensor zip(const Tensor& grad, const Tensor& in, Fn&& fn) {
  if (grad.shape() != in.shape()) {
    throw DimensionError("backward: gradient shape " + shape_to_string(grad.shape()) +
                         " does not match " + shape_to_string(in.shape()));
  }
  std::vector<double> out(in.size());
  const auto g = grad.values();
  const auto x = in.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(g[i], x[i]);
  return Tensor(in.shape(), std::move(out));
}

}  // namespace

Tensor binarize_det(const Tensor& theta) {
  return map(theta, [](double t, std::size_t) { return sign_binary(t); });
}

Tensor binarize_stoch(const Tensor& theta, const RandomKey& key) {
  return map(theta, [&](double t, std::size_t i) {
    return key.uniform(i) < hard_sigmoid(t) ? 1.0 : -1.0;
  });
}

Tensor ste_backward(const Tensor& grad_out, const Tensor& theta, const SteConfig& cfg) {
  return zip(grad_out, theta,
             [&](double g, double t) { return std::abs(t) <= cfg.t_clip ? g : 0.0; });
}

Tensor theta_tanh(const Tensor& p, ScaleParam v) {
  return map(p, [&](double x, std::size_t) { return std::tanh(v.value() * x); });
}

Tensor theta_tanh_backward(const Tensor& grad_out, const Tensor& p, ScaleParam v) {
  return zip(grad_out, p, [&](double g, double x) {
    const double t = std::tanh(v.value() * x);
    return g * v.value() * (1.0 - t * t);
  });
}

Tensor theta_pwl(const Tensor& p, ScaleParam v) {
  return map(p, [&](double x, std::size_t) { return pwl(x, v.value()); });
}

Tensor theta_pwl_backward(const Tensor& grad_out, const Tensor& p, ScaleParam v) {
  return zip(grad_out, p,
             [&](double g, double x) { return g * pwl_derivative(x, v.value()); });
}

}  // namespace pbnn
