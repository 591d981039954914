#include "pbnn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pbnn {

std::string_view to_string(Regime regime) {
  switch (regime) {
    case Regime::deterministic: return "deterministic";
    case Regime::stochastic: return "stochastic";
    case Regime::progressive: return "progressive";
    case Regime::real_valued: return "real";
  }
  return "unknown";
}

Regime parse_regime(std::string_view name) {
  if (name == "deterministic") return Regime::deterministic;
  if (name == "stochastic") return Regime::stochastic;
  if (name == "progressive") return Regime::progressive;
  if (name == "real" || name == "real_valued" || name == "real-valued") return Regime::real_valued;
  throw std::invalid_argument("unknown regime '" + std::string(name) + "'");
}

Param Param::make(Tensor value) {
  Param p;
  p.grad = Tensor(value.shape());
  p.adam = AdamState::for_shape(value.shape());
  p.value = std::move(value);
  return p;
}

EffectiveWeights effective_weights(const Tensor& p, bool binarized, const ForwardContext& ctx,
                                   std::uint64_t stream) {
  const auto values = p.values();
  std::vector<double> theta(values.size());
  std::vector<double> factor(values.size(), 1.0);
  if (!binarized || ctx.regime == Regime::real_valued) {
    std::copy(values.begin(), values.end(), theta.begin());
  } else if (ctx.regime == Regime::progressive) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      theta[i] = pwl(values[i], ctx.v);
      factor[i] = pwl_derivative(values[i], ctx.v);
    }
  } else {
    const bool draw = ctx.regime == Regime::stochastic && ctx.training;
    const RandomKey key = ctx.key.with_stream(stream);
    for (std::size_t i = 0; i < values.size(); ++i) {
      theta[i] = draw ? (key.uniform(i) < hard_sigmoid(values[i]) ? 1.0 : -1.0)
                      : sign_binary(values[i]);
      factor[i] = std::abs(values[i]) <= ctx.ste.t_clip ? 1.0 : 0.0;
    }
  }
  return {Tensor(p.shape(), std::move(theta), ctx.activations), std::move(factor)};
}

namespace {

Tensor apply_factor(std::vector<double> grad, const Shape& shape,
                    const std::vector<double>& factor) {
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= factor[i];
  return Tensor(shape, std::move(grad));
}

// Streams separate weight, bias and activation draws of one layer.
constexpr std::uint64_t kWeightStream = 0;
constexpr std::uint64_t kBiasStream = 1;

}  // namespace

// ---------------------------------------------------------------------------

ConvLayer ConvLayer::make(std::size_t in_channels, std::size_t filters, ConvGeometry geometry,
                          bool binarized, const Backend& storage) {
  ConvLayer layer;
  layer.in_channels = in_channels;
  layer.filters = filters;
  layer.geometry = geometry;
  layer.binarized = binarized;
  layer.weight =
      Param::make(Tensor({filters, in_channels, geometry.kernel, geometry.kernel}, storage));
  layer.bias = Param::make(Tensor({filters}, storage));
  return layer;
}

std::pair<Tensor, ConvTape> conv_forward(const Tensor& x, const ConvLayer& layer,
                                         const ForwardContext& ctx) {
  if (x.rank() != 4 || x.dim(1) != layer.in_channels) {
    throw DimensionError("conv_forward: expected B x " + std::to_string(layer.in_channels) +
                         " x H x W input, got " + shape_to_string(x.shape()));
  }
  const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto& g = layer.geometry;
  const std::size_t ho = g.output_extent(h), wo = g.output_extent(w);
  const std::size_t patch = c * g.kernel * g.kernel, pixels = ho * wo;
  const std::size_t f = layer.filters;

  ConvTape tape;
  tape.input = x.converted(ctx.activations);
  tape.weight = effective_weights(layer.weight.value, layer.binarized, ctx,
                                  layer.stream * 4 + kWeightStream);
  tape.bias = effective_weights(layer.bias.value, layer.binarized, ctx,
                                layer.stream * 4 + kBiasStream);

  const auto in = tape.input.values();
  const auto theta = tape.weight.theta.values();
  const auto bias = tape.bias.theta.values();
  std::vector<double> out(batch * f * pixels, 0.0);
  std::vector<double> columns(patch * pixels);
  for (std::size_t n = 0; n < batch; ++n) {
    kernels::im2col(in.subspan(n * c * h * w, c * h * w), c, h, w, g, columns);
    std::span<double> dst(out.data() + n * f * pixels, f * pixels);
    if (ctx.activations.is_fixed()) {
      kernels::gemm_nn_fixed(f, pixels, patch, theta, columns, dst, ctx.activations.format());
    } else {
      kernels::gemm_nn(f, pixels, patch, theta, columns, dst);
    }
    for (std::size_t o = 0; o < f; ++o) {
      for (std::size_t i = 0; i < pixels; ++i) dst[o * pixels + i] += bias[o];
    }
  }
  return {Tensor({batch, f, ho, wo}, std::move(out), ctx.activations), std::move(tape)};
}

ConvGrads conv_backward(const Tensor& grad_out, const ConvTape& tape, const ConvLayer& layer,
                        bool compute_grad_in) {
  const auto& x = tape.input;
  const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const auto& g = layer.geometry;
  const std::size_t ho = g.output_extent(h), wo = g.output_extent(w);
  const std::size_t patch = c * g.kernel * g.kernel, pixels = ho * wo;
  const std::size_t f = layer.filters;
  if (grad_out.shape() != Shape{batch, f, ho, wo}) {
    throw std::logic_error("conv_backward: gradient " + shape_to_string(grad_out.shape()) +
                           " does not match tape");
  }

  const auto in = x.values();
  const auto gy = grad_out.values();
  const auto theta = tape.weight.theta.values();
  std::vector<double> grad_in(compute_grad_in ? x.size() : 0, 0.0);
  std::vector<double> grad_theta(f * patch, 0.0);
  std::vector<double> grad_bias(f, 0.0);
  std::vector<double> columns(patch * pixels);
  std::vector<double> grad_columns(patch * pixels);
  for (std::size_t n = 0; n < batch; ++n) {
    const auto gy_n = gy.subspan(n * f * pixels, f * pixels);
    kernels::im2col(in.subspan(n * c * h * w, c * h * w), c, h, w, g, columns);
    kernels::gemm_nt(f, patch, pixels, gy_n, columns, grad_theta);
    if (compute_grad_in) {
      std::fill(grad_columns.begin(), grad_columns.end(), 0.0);
      kernels::gemm_tn(patch, pixels, f, theta, gy_n, grad_columns);
      kernels::col2im(grad_columns, c, h, w, g,
                      std::span<double>(grad_in.data() + n * c * h * w, c * h * w));
    }
    for (std::size_t o = 0; o < f; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < pixels; ++i) acc += gy_n[o * pixels + i];
      grad_bias[o] += acc;
    }
  }
  Tensor grad_in_tensor = compute_grad_in ? Tensor(x.shape(), std::move(grad_in)) : Tensor();
  return {std::move(grad_in_tensor),
          apply_factor(std::move(grad_theta), layer.weight.value.shape(), tape.weight.factor),
          apply_factor(std::move(grad_bias), layer.bias.value.shape(), tape.bias.factor)};
}

// ---------------------------------------------------------------------------

FcLayer FcLayer::make(std::size_t inputs, std::size_t outputs, bool binarized,
                      const Backend& storage) {
  FcLayer layer;
  layer.inputs = inputs;
  layer.outputs = outputs;
  layer.binarized = binarized;
  layer.weight = Param::make(Tensor({outputs, inputs}, storage));
  layer.bias = Param::make(Tensor({outputs}, storage));
  return layer;
}

std::pair<Tensor, FcTape> fc_forward(const Tensor& x, const FcLayer& layer,
                                     const ForwardContext& ctx) {
  if (x.rank() < 2 || x.size() != x.dim(0) * layer.inputs) {
    throw DimensionError("fc_forward: input " + shape_to_string(x.shape()) + " does not flatten to B x " +
                         std::to_string(layer.inputs));
  }
  const std::size_t batch = x.dim(0), in = layer.inputs, outs = layer.outputs;
  FcTape tape;
  tape.input_shape = x.shape();
  tape.input = x.reshaped({batch, in}).converted(ctx.activations);
  tape.weight = effective_weights(layer.weight.value, layer.binarized, ctx,
                                  layer.stream * 4 + kWeightStream);
  tape.bias = effective_weights(layer.bias.value, layer.binarized, ctx,
                                layer.stream * 4 + kBiasStream);

  const auto theta = tape.weight.theta.values();
  const auto bias = tape.bias.theta.values();
  std::vector<double> out(batch * outs, 0.0);
  if (ctx.activations.is_fixed()) {
    std::vector<double> theta_t(in * outs);
    for (std::size_t o = 0; o < outs; ++o) {
      for (std::size_t i = 0; i < in; ++i) theta_t[i * outs + o] = theta[o * in + i];
    }
    kernels::gemm_nn_fixed(batch, outs, in, tape.input.values(), theta_t, out,
                           ctx.activations.format());
  } else {
    kernels::gemm_nt(batch, outs, in, tape.input.values(), theta, out);
  }
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < outs; ++o) out[b * outs + o] += bias[o];
  }
  return {Tensor({batch, outs}, std::move(out), ctx.activations), std::move(tape)};
}

FcGrads fc_backward(const Tensor& grad_out, const FcTape& tape, const FcLayer& layer) {
  const std::size_t batch = tape.input.dim(0), in = layer.inputs, outs = layer.outputs;
  if (grad_out.shape() != Shape{batch, outs}) {
    throw std::logic_error("fc_backward: gradient " + shape_to_string(grad_out.shape()) +
                           " does not match tape");
  }
  const auto gy = grad_out.values();
  std::vector<double> grad_theta(outs * in, 0.0);
  kernels::gemm_tn(outs, in, batch, gy, tape.input.values(), grad_theta);
  std::vector<double> grad_in(batch * in, 0.0);
  kernels::gemm_nn(batch, in, outs, gy, tape.weight.theta.values(), grad_in);
  std::vector<double> grad_bias(outs, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < outs; ++o) grad_bias[o] += gy[b * outs + o];
  }
  return {Tensor(tape.input_shape, std::move(grad_in)),
          apply_factor(std::move(grad_theta), layer.weight.value.shape(), tape.weight.factor),
          apply_factor(std::move(grad_bias), layer.bias.value.shape(), tape.bias.factor)};
}

// ---------------------------------------------------------------------------

BatchNormState BatchNormState::make(std::size_t channels, const Backend& param_storage,
                                    const Backend& stat_storage, double momentum,
                                    double epsilon) {
  BatchNormState s;
  s.channels = channels;
  s.gamma = Param::make(Tensor::full({channels}, 1.0, param_storage));
  s.beta = Param::make(Tensor({channels}, param_storage));
  s.running_mean = Tensor({channels}, stat_storage);
  s.running_std = Tensor::full({channels}, std::sqrt(1.0 + epsilon), stat_storage);
  s.momentum = momentum;
  s.epsilon = epsilon;
  return s;
}

namespace {

struct ChannelLayout {
  std::size_t batch;
  std::size_t channels;
  std::size_t spatial;
};

ChannelLayout channel_layout(const Tensor& x, std::size_t channels) {
  if (x.rank() < 2 || x.dim(1) != channels) {
    throw DimensionError("batch norm: expected B x " + std::to_string(channels) +
                         " [x ...] input, got " + shape_to_string(x.shape()));
  }
  return {x.dim(0), channels, x.size() / (x.dim(0) * channels)};
}

// Smallest representable positive std in a fixed backend; keeps eval-mode
// division finite once σ_r is quantized.
double floor_std(double sigma, const Backend& backend) {
  if (!backend.is_fixed()) return sigma;
  return std::max(backend.apply(sigma), backend.format().resolution());
}

}  // namespace

std::pair<Tensor, BnTape> bn_forward(const Tensor& x, BatchNormState& state, bool training) {
  if (!training) return {bn_forward_eval(x, state), BnTape{}};
  const auto [batch, channels, spatial] = channel_layout(x, state.channels);
  const double count = static_cast<double>(batch * spatial);
  const auto in = x.values();
  const auto gamma = state.gamma.value.values();
  const auto beta = state.beta.value.values();

  std::vector<double> x_hat(x.size());
  std::vector<double> out(x.size());
  std::vector<double> inv_std(channels);
  std::vector<double> run_mean(state.running_mean.values().begin(),
                               state.running_mean.values().end());
  std::vector<double> run_std(state.running_std.values().begin(),
                              state.running_std.values().end());
  for (std::size_t ch = 0; ch < channels; ++ch) {
    double sum = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* p = in.data() + (n * channels + ch) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) sum += p[i];
    }
    const double mean = sum / count;
    double sq = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const double* p = in.data() + (n * channels + ch) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) sq += (p[i] - mean) * (p[i] - mean);
    }
    const double var = sq / count;
    inv_std[ch] = 1.0 / std::sqrt(var + state.epsilon);
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + ch) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        x_hat[base + i] = (in[base + i] - mean) * inv_std[ch];
        out[base + i] = gamma[ch] * x_hat[base + i] + beta[ch];
      }
    }
    const double unbiased = count > 1.0 ? sq / (count - 1.0) : var;
    const double old_var = std::max(run_std[ch] * run_std[ch] - state.epsilon, 0.0);
    const double new_var = (1.0 - state.momentum) * old_var + state.momentum * unbiased;
    run_mean[ch] = (1.0 - state.momentum) * run_mean[ch] + state.momentum * mean;
    run_std[ch] = floor_std(std::sqrt(new_var + state.epsilon), state.running_std.backend());
  }
  state.running_mean = Tensor({channels}, std::move(run_mean), state.running_mean.backend());
  state.running_std = Tensor({channels}, std::move(run_std), state.running_std.backend());
  return {Tensor(x.shape(), std::move(out), x.backend()),
          BnTape{Tensor(x.shape(), std::move(x_hat)), std::move(inv_std)}};
}

Tensor bn_forward_eval(const Tensor& x, const BatchNormState& state) {
  const auto [batch, channels, spatial] = channel_layout(x, state.channels);
  const auto in = x.values();
  const auto gamma = state.gamma.value.values();
  const auto beta = state.beta.value.values();
  const auto mu = state.running_mean.values();
  const auto sigma = state.running_std.values();
  std::vector<double> out(x.size());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const std::size_t base = (n * channels + ch) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        out[base + i] = gamma[ch] * ((in[base + i] - mu[ch]) / sigma[ch]) + beta[ch];
      }
    }
  }
  return Tensor(x.shape(), std::move(out), x.backend());
}

BnGrads bn_backward(const Tensor& grad_out, const BnTape& tape, const BatchNormState& state) {
  if (grad_out.shape() != tape.x_hat.shape()) {
    throw std::logic_error("bn_backward: gradient does not match tape");
  }
  const auto [batch, channels, spatial] = channel_layout(grad_out, state.channels);
  const double count = static_cast<double>(batch * spatial);
  const auto gy = grad_out.values();
  const auto xh = tape.x_hat.values();
  const auto gamma = state.gamma.value.values();
  std::vector<double> grad_in(grad_out.size());
  std::vector<double> grad_gamma(channels, 0.0);
  std::vector<double> grad_beta(channels, 0.0);
  for (std::size_t ch = 0; ch < channels; ++ch) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + ch) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        sum_g += gy[base + i];
        sum_gx += gy[base + i] * xh[base + i];
      }
    }
    grad_gamma[ch] = sum_gx;
    grad_beta[ch] = sum_g;
    const double scale = gamma[ch] * tape.inv_std[ch] / count;
    for (std::size_t n = 0; n < batch; ++n) {
      const std::size_t base = (n * channels + ch) * spatial;
      for (std::size_t i = 0; i < spatial; ++i) {
        grad_in[base + i] = scale * (count * gy[base + i] - sum_g - xh[base + i] * sum_gx);
      }
    }
  }
  return {Tensor(grad_out.shape(), std::move(grad_in)), Tensor({channels}, std::move(grad_gamma)),
          Tensor({channels}, std::move(grad_beta))};
}

std::vector<double> bn_thresholds(const BatchNormState& state) {
  const auto gamma = state.gamma.value.values();
  const auto beta = state.beta.value.values();
  const auto mu = state.running_mean.values();
  const auto sigma = state.running_std.values();
  std::vector<double> t(state.channels);
  for (std::size_t ch = 0; ch < state.channels; ++ch) {
    t[ch] = gamma[ch] == 0.0 ? 0.0 : mu[ch] - sigma[ch] * beta[ch] / gamma[ch];
  }
  return t;
}

Tensor bn_sign_shortcut(const Tensor& input, const BatchNormState& state) {
  const auto [batch, channels, spatial] = channel_layout(input, state.channels);
  const auto thresholds = bn_thresholds(state);
  const auto gamma = state.gamma.value.values();
  const auto beta = state.beta.value.values();
  const auto in = input.values();
  std::vector<double> out(input.size());
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      const std::size_t base = (n * channels + ch) * spatial;
      const double t = thresholds[ch];
      for (std::size_t i = 0; i < spatial; ++i) {
        const double x = in[base + i];
        bool positive;
        if (gamma[ch] > 0.0) {
          positive = x > t;
        } else if (gamma[ch] < 0.0) {
          // Strict on both sides: x == T normalizes to exactly zero, which signs to −1.
          positive = x < t;
        } else {
          positive = beta[ch] > 0.0;
        }
        out[base + i] = positive ? 1.0 : -1.0;
      }
    }
  }
  return Tensor(input.shape(), std::move(out), input.backend());
}

// ---------------------------------------------------------------------------

std::pair<Tensor, ActivationTape> activation_forward(const Tensor& x, const ForwardContext& ctx,
                                                     std::uint64_t stream) {
  const auto in = x.values();
  std::vector<double> out(x.size());
  ActivationTape tape;
  tape.pass.resize(x.size());
  switch (ctx.regime) {
    case Regime::progressive:
      tape.slope = ctx.v;
      for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = pwl(in[i], ctx.v);
        tape.pass[i] = std::abs(ctx.v * in[i]) < 1.0;
      }
      break;
    case Regime::deterministic:
    case Regime::stochastic: {
      const bool draw = ctx.regime == Regime::stochastic && ctx.training;
      const RandomKey key = ctx.key.with_stream(stream);
      for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = draw ? (key.uniform(i) < hard_sigmoid(in[i]) ? 1.0 : -1.0)
                      : sign_binary(in[i]);
        tape.pass[i] = std::abs(in[i]) <= ctx.ste.t_clip;
      }
      break;
    }
    case Regime::real_valued:
      for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = in[i] > 0.0 ? in[i] : 0.0;
        tape.pass[i] = in[i] > 0.0;
      }
      break;
  }
  return {Tensor(x.shape(), std::move(out), x.backend()), std::move(tape)};
}

Tensor activation_backward(const Tensor& grad_out, const ActivationTape& tape) {
  if (grad_out.size() != tape.pass.size()) {
    throw std::logic_error("activation_backward: gradient does not match tape");
  }
  const auto g = grad_out.values();
  std::vector<double> out(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = tape.pass[i] ? g[i] * tape.slope : 0.0;
  return Tensor(grad_out.shape(), std::move(out));
}

// ---------------------------------------------------------------------------

std::pair<Tensor, PoolTape> maxpool_forward(const Tensor& x, std::size_t kernel,
                                            std::size_t stride) {
  if (x.rank() != 4) throw DimensionError("maxpool: expected B x C x H x W input");
  const std::size_t batch = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const ConvGeometry g{kernel, stride, 0};
  const std::size_t ho = g.output_extent(h), wo = g.output_extent(w);
  const auto in = x.values();
  std::vector<double> out(batch * c * ho * wo);
  PoolTape tape{x.shape(), std::vector<std::uint32_t>(out.size())};
  for (std::size_t plane = 0; plane < batch * c; ++plane) {
    const std::size_t in_base = plane * h * w;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        std::size_t best = in_base + oh * stride * w + ow * stride;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const std::size_t idx = in_base + (oh * stride + ki) * w + ow * stride + kj;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (plane * ho + oh) * wo + ow;
        out[o] = in[best];
        tape.argmax[o] = static_cast<std::uint32_t>(best);
      }
    }
  }
  return {Tensor({batch, c, ho, wo}, std::move(out), x.backend()), std::move(tape)};
}

Tensor maxpool_backward(const Tensor& grad_out, const PoolTape& tape) {
  if (grad_out.size() != tape.argmax.size()) {
    throw std::logic_error("maxpool_backward: gradient does not match tape");
  }
  std::vector<double> grad_in(shape_size(tape.input_shape), 0.0);
  const auto g = grad_out.values();
  for (std::size_t o = 0; o < g.size(); ++o) grad_in[tape.argmax[o]] += g[o];
  return Tensor(tape.input_shape, std::move(grad_in));
}

}  // namespace pbnn
