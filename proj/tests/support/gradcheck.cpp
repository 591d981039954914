#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "oracles.hpp"
#include "pbnn/binarize.hpp"
#include "pbnn/layers.hpp"
#include "pbnn/optim.hpp"

namespace pbnn::testing {

namespace {

constexpr double kStep = 1e-6;

std::vector<double> numeric_gradient(std::vector<double>& x, const std::function<double()>& loss) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + kStep;
    const double up = loss();
    x[i] = keep - kStep;
    const double down = loss();
    x[i] = keep;
    g[i] = (up - down) / (2.0 * kStep);
  }
  return g;
}

double contract(const Tensor& y, const std::vector<double>& r) {
  double s = 0.0;
  const auto v = y.values();
  for (std::size_t i = 0; i < r.size(); ++i) s += v[i] * r[i];
  return s;
}

std::vector<double> values_of(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

// Uniform draws in [−span, span] that stay 1% away from the surrogate kink
// at |v·x| = 1, so a ±h probe never straddles it.
std::vector<double> kink_free(std::size_t n, std::uint64_t seed, double v, double span) {
  std::mt19937_64 gen(seed);
  std::vector<double> out(n);
  for (auto& x : out) {
    do {
      x = span * (2.0 * (static_cast<double>(gen() >> 11) * 0x1.0p-53) - 1.0);
    } while (std::abs(std::abs(v * x) - 1.0) < 0.01 || std::abs(x) < 1e-3);
  }
  return out;
}

double pick_v(std::uint64_t seed) {
  const double u = random_values(1, seed ^ 0x5eed)[0];
  return 1.0 + 4.0 * u * u;
}

ForwardContext context(Regime regime, double v) {
  ForwardContext ctx;
  ctx.regime = regime;
  ctx.v = v;
  ctx.training = true;
  return ctx;
}

GradCase conv_case(std::uint64_t seed, Regime regime, const char* name) {
  static const ConvGeometry geometries[] = {{3, 1, 1}, {2, 2, 0}, {3, 2, 1}, {1, 1, 0}};
  const auto& g = geometries[seed % 4];
  const std::size_t batch = 2, c = 2, h = g.stride == 2 && g.kernel == 3 ? 5 : 4, f = 3;
  const double v = regime == Regime::progressive ? pick_v(seed) : 1.0;
  auto layer = ConvLayer::make(c, f, g, true, Backend::real());
  const auto ctx = context(regime, v);
  std::vector<double> x = random_values(batch * c * h * h, seed + 1);
  std::vector<double> w = regime == Regime::progressive
                              ? kink_free(f * c * g.kernel * g.kernel, seed + 2, v, 1.5 / v)
                              : random_values(f * c * g.kernel * g.kernel, seed + 2);
  std::vector<double> b = regime == Regime::progressive ? kink_free(f, seed + 3, v, 1.5 / v)
                                                        : random_values(f, seed + 3);
  const std::size_t ho = g.output_extent(h);
  const auto r = random_values(batch * f * ho * ho, seed + 4);
  const Shape xs{batch, c, h, h};
  const auto loss = [&]() {
    layer.weight.value = Tensor(layer.weight.value.shape(), w);
    layer.bias.value = Tensor({f}, b);
    return contract(conv_forward(Tensor(xs, x), layer, ctx).first, r);
  };
  loss();
  const auto [y, tape] = conv_forward(Tensor(xs, x), layer, ctx);
  const auto grads = conv_backward(Tensor(y.shape(), r), tape, layer);
  const double e = std::max({relative_error(values_of(grads.grad_in), numeric_gradient(x, loss)),
                             relative_error(values_of(grads.grad_weight), numeric_gradient(w, loss)),
                             relative_error(values_of(grads.grad_bias), numeric_gradient(b, loss))});
  return {name, e};
}

GradCase fc_case(std::uint64_t seed, Regime regime, const char* name) {
  const std::size_t batch = 8, in = 16, out = 4;
  const double v = regime == Regime::progressive ? pick_v(seed) : 1.0;
  auto layer = FcLayer::make(in, out, true, Backend::real());
  const auto ctx = context(regime, v);
  std::vector<double> x = random_values(batch * in, seed + 1);
  std::vector<double> w = regime == Regime::progressive ? kink_free(in * out, seed + 2, v, 1.5 / v)
                                                        : random_values(in * out, seed + 2);
  std::vector<double> b = regime == Regime::progressive ? kink_free(out, seed + 3, v, 1.5 / v)
                                                        : random_values(out, seed + 3);
  const auto r = random_values(batch * out, seed + 4);
  const auto loss = [&]() {
    layer.weight.value = Tensor({out, in}, w);
    layer.bias.value = Tensor({out}, b);
    return contract(fc_forward(Tensor({batch, in}, x), layer, ctx).first, r);
  };
  loss();
  const auto [y, tape] = fc_forward(Tensor({batch, in}, x), layer, ctx);
  const auto grads = fc_backward(Tensor(y.shape(), r), tape, layer);
  const double e = std::max({relative_error(values_of(grads.grad_in), numeric_gradient(x, loss)),
                             relative_error(values_of(grads.grad_weight), numeric_gradient(w, loss)),
                             relative_error(values_of(grads.grad_bias), numeric_gradient(b, loss))});
  return {name, e};
}

}  // namespace

GradCase conv_progressive_case(std::uint64_t seed) { return conv_case(seed, Regime::progressive, "conv/progressive"); }
GradCase conv_real_case(std::uint64_t seed) { return conv_case(seed, Regime::real_valued, "conv/real"); }
GradCase fc_progressive_case(std::uint64_t seed) { return fc_case(seed, Regime::progressive, "fc/progressive"); }
GradCase fc_real_case(std::uint64_t seed) { return fc_case(seed, Regime::real_valued, "fc/real"); }

GradCase batch_norm_case(std::uint64_t seed) {
  const std::size_t batch = 4 + seed % 5, c = 3, spatial_side = seed % 2 == 0 ? 1 : 2;
  const Shape xs = spatial_side == 1 ? Shape{batch, c} : Shape{batch, c, 2, 2};
  const auto base = BatchNormState::make(c, Backend::real(), Backend::real());
  std::vector<double> x = random_values(shape_size(xs), seed + 1, -2.0, 2.0);
  std::vector<double> gamma = random_values(c, seed + 2, -2.0, 2.0);
  std::vector<double> beta = random_values(c, seed + 3);
  const auto r = random_values(shape_size(xs), seed + 4);
  const auto loss = [&]() {
    auto state = base;
    state.gamma.value = Tensor({c}, gamma);
    state.beta.value = Tensor({c}, beta);
    return contract(bn_forward(Tensor(xs, x), state, true).first, r);
  };
  auto state = base;
  state.gamma.value = Tensor({c}, gamma);
  state.beta.value = Tensor({c}, beta);
  const auto [y, tape] = bn_forward(Tensor(xs, x), state, true);
  const auto grads = bn_backward(Tensor(xs, r), tape, state);
  const double e = std::max({relative_error(values_of(grads.grad_in), numeric_gradient(x, loss)),
                             relative_error(values_of(grads.grad_gamma), numeric_gradient(gamma, loss)),
                             relative_error(values_of(grads.grad_beta), numeric_gradient(beta, loss))});
  return {"batch_norm", e};
}

GradCase maxpool_case(std::uint64_t seed) {
  const Shape xs{2, 2, 4, 4};
  // Distinct values on a 0.01 lattice (plus jitter) keep every window's
  // maximum at least 0.005 ahead of its runner-up.
  std::vector<double> x(shape_size(xs));
  std::vector<std::size_t> perm(x.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), std::mt19937_64(seed));
  const auto jitter = random_values(x.size(), seed + 1, 0.0, 0.004);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * static_cast<double>(perm[i]) + jitter[i] - 0.3;
  const auto r = random_values(2 * 2 * 2 * 2, seed + 2);
  const auto loss = [&]() { return contract(maxpool_forward(Tensor(xs, x)).first, r); };
  const auto [y, tape] = maxpool_forward(Tensor(xs, x));
  const auto grad = maxpool_backward(Tensor(y.shape(), r), tape);
  return {"maxpool", relative_error(values_of(grad), numeric_gradient(x, loss))};
}

GradCase pwl_activation_case(std::uint64_t seed) {
  const double v = pick_v(seed);
  const auto ctx = context(Regime::progressive, v);
  std::vector<double> x = kink_free(24, seed + 1, v, 2.0 / v);
  const auto r = random_values(24, seed + 2);
  const auto loss = [&]() { return contract(activation_forward(Tensor({4, 6}, x), ctx, 0).first, r); };
  const auto [y, tape] = activation_forward(Tensor({4, 6}, x), ctx, 0);
  const auto grad = activation_backward(Tensor(y.shape(), r), tape);
  return {"activation/pwl", relative_error(values_of(grad), numeric_gradient(x, loss))};
}

GradCase relu_activation_case(std::uint64_t seed) {
  const auto ctx = context(Regime::real_valued, 1.0);
  std::vector<double> x = kink_free(24, seed + 1, 1e-9, 2.0);
  const auto r = random_values(24, seed + 2);
  const auto loss = [&]() { return contract(activation_forward(Tensor({4, 6}, x), ctx, 0).first, r); };
  const auto [y, tape] = activation_forward(Tensor({4, 6}, x), ctx, 0);
  const auto grad = activation_backward(Tensor(y.shape(), r), tape);
  return {"activation/relu", relative_error(values_of(grad), numeric_gradient(x, loss))};
}

GradCase theta_tanh_case(std::uint64_t seed) {
  const ScaleParam v(pick_v(seed));
  std::vector<double> p = random_values(20, seed + 1, -1.5 / v.value(), 1.5 / v.value());
  const auto r = random_values(20, seed + 2);
  const auto loss = [&]() { return contract(theta_tanh(Tensor({20}, p), v), r); };
  const auto grad = theta_tanh_backward(Tensor({20}, r), Tensor({20}, p), v);
  return {"theta/tanh", relative_error(values_of(grad), numeric_gradient(p, loss))};
}

GradCase theta_pwl_case(std::uint64_t seed) {
  const ScaleParam v(pick_v(seed));
  std::vector<double> p = kink_free(20, seed + 1, v.value(), 1.5 / v.value());
  const auto r = random_values(20, seed + 2);
  const auto loss = [&]() { return contract(theta_pwl(Tensor({20}, p), v), r); };
  const auto grad = theta_pwl_backward(Tensor({20}, r), Tensor({20}, p), v);
  return {"theta/pwl", relative_error(values_of(grad), numeric_gradient(p, loss))};
}

GradCase cross_entropy_case(std::uint64_t seed) {
  const std::size_t batch = 4, classes = 10;
  std::vector<double> z = random_values(batch * classes, seed + 1, -3.0, 3.0);
  std::vector<std::uint8_t> labels(batch);
  for (std::size_t i = 0; i < batch; ++i) labels[i] = static_cast<std::uint8_t>((seed + 7 * i) % classes);
  const auto loss = [&]() { return cross_entropy(Tensor({batch, classes}, z), labels).loss; };
  const auto analytic = cross_entropy(Tensor({batch, classes}, z), labels).grad_logits;
  return {"cross_entropy", relative_error(values_of(analytic), numeric_gradient(z, loss))};
}

std::vector<GradFamily> gradient_families() {
  return {
      {"conv/progressive", conv_progressive_case},
      {"conv/real", conv_real_case},
      {"fc/progressive", fc_progressive_case},
      {"fc/real", fc_real_case},
      {"batch_norm", batch_norm_case},
      {"maxpool", maxpool_case},
      {"activation/pwl", pwl_activation_case},
      {"activation/relu", relu_activation_case},
      {"theta/tanh", theta_tanh_case},
      {"theta/pwl", theta_pwl_case},
      {"cross_entropy", cross_entropy_case},
  };
}

}  // namespace pbnn::testing
