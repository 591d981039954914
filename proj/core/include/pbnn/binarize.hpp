#pragma once

// Binarization and activation functions with their gradients: sign,
// stochastic sign, the straight-through estimator, and the two progressive
// surrogates (tanh and piecewise-linear) controlled by a scale v.

#include <stdexcept>

#include "pbnn/random.hpp"
#include "pbnn/tensor.hpp"

namespace pbnn {

struct SteConfig {
  double t_clip = 1.0;

  static SteConfig make(double t_clip) {
    if (!(t_clip > 0.0)) throw std::invalid_argument("SteConfig: t_clip must be > 0");
    return SteConfig{t_clip};
  }
};

/// Sharpness of the progressive surrogate; always >= 1.
class ScaleParam {
 public:
  explicit ScaleParam(double v) : v_(v) {
    if (!(v >= 1.0)) throw std::invalid_argument("ScaleParam: v must be >= 1");
  }
  double value() const { return v_; }

 private:
  double v_;
};

// Scalar forms.
inline double sign_binary(double theta) { return theta > 0.0 ? 1.0 : -1.0; }
double hard_sigmoid(double theta);
double pwl(double p, double v);
/// dθ/dP of the piecewise-linear surrogate: v strictly inside the band, 0 on
/// and beyond the kink.
double pwl_derivative(double p, double v);

// Tensor forms. Outputs keep the input's backend (re-quantized if fixed).
Tensor binarize_det(const Tensor& theta);
/// +1 with probability hard_sigmoid(θ); element i draws key.uniform(i).
Tensor binarize_stoch(const Tensor& theta, const RandomKey& key);
Tensor ste_backward(const Tensor& grad_out, const Tensor& theta, const SteConfig& cfg);

Tensor theta_tanh(const Tensor& p, ScaleParam v);
Tensor theta_tanh_backward(const Tensor& grad_out, const Tensor& p, ScaleParam v);
Tensor theta_pwl(const Tensor& p, ScaleParam v);
Tensor theta_pwl_backward(const Tensor& grad_out, const Tensor& p, ScaleParam v);

}  // namespace pbnn
