#include "pbnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <type_traits>

namespace pbnn {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string LayerSpec::describe() const {
  std::ostringstream out;
  switch (kind) {
    case Kind::conv:
      out << "Convolutional, f=" << units << ", k=" << geometry.kernel << ", s=" << geometry.stride
          << ", p=" << geometry.padding;
      break;
    case Kind::max_pool:
      out << "Max Pooling, k=" << geometry.kernel << ", s=" << geometry.stride;
      break;
    case Kind::fc:
      out << "Fully Connected, N=" << units;
      break;
  }
  return out.str();
}

std::vector<Shape> NetworkSpec::output_shapes() const {
  if (input_shape.size() != 3) throw DimensionError("NetworkSpec: input must be C x H x W");
  if (layers.empty()) throw DimensionError("NetworkSpec: no layers");
  std::vector<Shape> shapes;
  Shape current = input_shape;
  for (const auto& row : layers) {
    switch (row.kind) {
      case LayerSpec::Kind::conv:
        if (current.size() != 3) throw DimensionError("NetworkSpec: convolution after flatten");
        current = {row.units, row.geometry.output_extent(current[1]),
                   row.geometry.output_extent(current[2])};
        break;
      case LayerSpec::Kind::max_pool:
        if (current.size() != 3) throw DimensionError("NetworkSpec: pooling after flatten");
        current = {current[0], row.geometry.output_extent(current[1]),
                   row.geometry.output_extent(current[2])};
        break;
      case LayerSpec::Kind::fc:
        current = {row.units};
        break;
    }
    if (shape_size(current) == 0) throw DimensionError("NetworkSpec: empty activation");
    shapes.push_back(current);
  }
  if (layers.back().kind != LayerSpec::Kind::fc || current != Shape{classes}) {
    throw DimensionError("NetworkSpec: final row must be a fully-connected layer with " +
                         std::to_string(classes) + " outputs");
  }
  return shapes;
}

NetworkSpec NetworkSpec::vgg() {
  NetworkSpec s;
  s.name = "vgg";
  s.layers = {LayerSpec::conv(128), LayerSpec::conv(128), LayerSpec::max_pool(),
              LayerSpec::conv(128), LayerSpec::conv(256), LayerSpec::max_pool(),
              LayerSpec::conv(256), LayerSpec::conv(512), LayerSpec::max_pool(),
              LayerSpec::fc(1024),  LayerSpec::fc(1024),  LayerSpec::fc(10, false)};
  return s;
}

NetworkSpec NetworkSpec::tiny(std::size_t image_size) {
  NetworkSpec s;
  s.name = "tiny";
  s.input_shape = {3, image_size, image_size};
  s.layers = {LayerSpec::conv(16), LayerSpec::conv(32), LayerSpec::max_pool(),
              LayerSpec::fc(128), LayerSpec::fc(10, false)};
  return s;
}

NetworkSpec NetworkSpec::named(const std::string& name, std::size_t image_size) {
  if (name == "vgg") {
    if (image_size != 32) throw std::invalid_argument("vgg architecture requires 32x32 input");
    return vgg();
  }
  if (name == "tiny") return tiny(image_size);
  throw std::invalid_argument("unknown architecture '" + name + "'");
}

// ---------------------------------------------------------------------------

namespace {

Tensor uniform_init(Shape shape, double bound, CounterRng& rng, const Backend& storage) {
  std::vector<double> values(shape_size(shape));
  for (auto& x : values) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(values), storage);
}

}  // namespace

Network Network::build(const NetworkSpec& spec, const NumericConfig& numeric, std::uint64_t seed,
                       BatchNormOptions bn) {
  const auto shapes = spec.output_shapes();
  Network net;
  net.spec_ = spec;
  net.numeric_ = numeric;
  CounterRng rng(RandomKey{seed, 0, 0, 0x1417});
  Shape current = spec.input_shape;
  for (std::size_t row = 0; row < spec.layers.size(); ++row) {
    const auto& ls = spec.layers[row];
    const bool last = row + 1 == spec.layers.size();
    const auto stream = static_cast<std::uint64_t>(net.layers_.size());
    switch (ls.kind) {
      case LayerSpec::Kind::conv: {
        auto layer = ConvLayer::make(current[0], ls.units, ls.geometry, ls.binarized,
                                     numeric.parameters);
        const double k2 = static_cast<double>(ls.geometry.kernel * ls.geometry.kernel);
        const double bound = std::sqrt(6.0 / (static_cast<double>(current[0] + ls.units) * k2));
        layer.weight.value = uniform_init(layer.weight.value.shape(), bound, rng, numeric.parameters);
        // Batch norm cancels any bias gradient, so biases keep their initial
        // values; a zero start would leave them inside the surrogate band.
        layer.bias.value = uniform_init(layer.bias.value.shape(), bound, rng, numeric.parameters);
        layer.stream = stream;
        net.layers_.emplace_back(std::move(layer));
        break;
      }
      case LayerSpec::Kind::max_pool:
        net.layers_.emplace_back(MaxPoolLayer{ls.geometry.kernel, ls.geometry.stride});
        break;
      case LayerSpec::Kind::fc: {
        const std::size_t inputs = shape_size(current);
        auto layer = FcLayer::make(inputs, ls.units, ls.binarized && !last, numeric.parameters);
        const double bound = std::sqrt(6.0 / static_cast<double>(inputs + ls.units));
        layer.weight.value = uniform_init(layer.weight.value.shape(), bound, rng, numeric.parameters);
        if (!last) {
          layer.bias.value = uniform_init(layer.bias.value.shape(), bound, rng, numeric.parameters);
        }
        layer.stream = stream;
        net.layers_.emplace_back(std::move(layer));
        break;
      }
    }
    if (ls.kind != LayerSpec::Kind::max_pool && !last) {
      net.layers_.emplace_back(BatchNormState::make(ls.units, numeric.parameters,
                                                    numeric.activations, bn.momentum, bn.epsilon));
      net.layers_.emplace_back(ActivationLayer{static_cast<std::uint64_t>(net.layers_.size())});
    }
    current = shapes[row];
  }
  return net;
}

namespace {

template <typename Net>
Tensor run_forward(Net& net, const Tensor& input, const ForwardContext& ctx, ForwardTape* tape) {
  constexpr bool mutable_net = !std::is_const_v<Net>;
  Tensor x = input.converted(ctx.activations);
  auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    auto& layer = layers[i];
    if (auto* conv = std::get_if<ConvLayer>(&layer)) {
      auto [y, t] = conv_forward(x, *conv, ctx);
      if (tape) tape->emplace_back(std::move(t));
      x = std::move(y);
    } else if (auto* fc = std::get_if<FcLayer>(&layer)) {
      auto [y, t] = fc_forward(x, *fc, ctx);
      if (tape) tape->emplace_back(std::move(t));
      x = std::move(y);
    } else if (auto* bn = std::get_if<BatchNormState>(&layer)) {
      if (ctx.training) {
        if constexpr (mutable_net) {
          auto [y, t] = bn_forward(x, *bn, true);
          if (tape) tape->emplace_back(std::move(t));
          x = std::move(y);
        } else {
          throw std::logic_error("Network::infer called with a training context");
        }
      } else if (ctx.use_bn_shortcut() && i + 1 < layers.size() &&
                 std::holds_alternative<ActivationLayer>(layers[i + 1])) {
        x = bn_sign_shortcut(x, *bn);
        ++i;  // activation folded into the threshold compare
      } else {
        x = bn_forward_eval(x, *bn);
      }
    } else if (auto* act = std::get_if<ActivationLayer>(&layer)) {
      auto [y, t] = activation_forward(x, ctx, act->stream * 4 + 2);
      if (tape) tape->emplace_back(std::move(t));
      x = std::move(y);
    } else if (auto* pool = std::get_if<MaxPoolLayer>(&layer)) {
      auto [y, t] = maxpool_forward(x, pool->kernel, pool->stride);
      if (tape) tape->emplace_back(std::move(t));
      x = std::move(y);
    }
  }
  return x;
}

}  // namespace

Tensor Network::forward(const Tensor& x, const ForwardContext& ctx, ForwardTape* tape) {
  if (tape) tape->clear();
  return run_forward(*this, x, ctx, tape);
}

Tensor Network::infer(const Tensor& x, const ForwardContext& ctx) const {
  ForwardContext eval = ctx;
  eval.training = false;
  return run_forward(*this, x, eval, nullptr);
}

void Network::backward(const Tensor& grad_logits, const ForwardTape& tape) {
  if (tape.size() != layers_.size()) {
    throw std::logic_error("Network::backward: tape has " + std::to_string(tape.size()) +
                           " entries for " + std::to_string(layers_.size()) + " layers");
  }
  Tensor grad = grad_logits;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need_input_grad = i > 0;
    std::visit(overloaded{
                   [&](ConvLayer& conv) {
                     auto g = conv_backward(grad, std::get<ConvTape>(tape[i]), conv, need_input_grad);
                     conv.weight.grad = std::move(g.grad_weight);
                     conv.bias.grad = std::move(g.grad_bias);
                     grad = std::move(g.grad_in);
                   },
                   [&](FcLayer& fc) {
                     auto g = fc_backward(grad, std::get<FcTape>(tape[i]), fc);
                     fc.weight.grad = std::move(g.grad_weight);
                     fc.bias.grad = std::move(g.grad_bias);
                     grad = std::move(g.grad_in);
                   },
                   [&](BatchNormState& bn) {
                     auto g = bn_backward(grad, std::get<BnTape>(tape[i]), bn);
                     bn.gamma.grad = std::move(g.grad_gamma);
                     bn.beta.grad = std::move(g.grad_beta);
                     grad = std::move(g.grad_in);
                   },
                   [&](ActivationLayer&) {
                     grad = activation_backward(grad, std::get<ActivationTape>(tape[i]));
                   },
                   [&](MaxPoolLayer&) {
                     grad = maxpool_backward(grad, std::get<PoolTape>(tape[i]));
                   },
               },
               layers_[i]);
  }
}

void Network::adam_step(double eta) {
  for_each_param([&](const std::string&, Param& p) { pbnn::adam_step(p.value, p.grad, p.adam, eta); });
}

void Network::for_each_param(const std::function<void(const std::string&, Param&)>& fn) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const std::string prefix = "L" + std::to_string(i) + ".";
    std::visit(overloaded{
                   [&](ConvLayer& l) {
                     fn(prefix + "weight", l.weight);
                     fn(prefix + "bias", l.bias);
                   },
                   [&](FcLayer& l) {
                     fn(prefix + "weight", l.weight);
                     fn(prefix + "bias", l.bias);
                   },
                   [&](BatchNormState& l) {
                     fn(prefix + "gamma", l.gamma);
                     fn(prefix + "beta", l.beta);
                   },
                   [](auto&) {},
               },
               layers_[i]);
  }
}

void Network::for_each_param(const std::function<void(const std::string&, const Param&)>& fn) const {
  const_cast<Network*>(this)->for_each_param(
      [&](const std::string& name, Param& p) { fn(name, p); });
}

void Network::for_each_state(const std::function<void(const std::string&, Tensor&)>& fn) {
  for_each_param([&](const std::string& name, Param& p) { fn(name, p.value); });
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (auto* bn = std::get_if<BatchNormState>(&layers_[i])) {
      const std::string prefix = "L" + std::to_string(i) + ".";
      fn(prefix + "running_mean", bn->running_mean);
      fn(prefix + "running_std", bn->running_std);
    }
  }
}

void Network::for_each_state(const std::function<void(const std::string&, const Tensor&)>& fn) const {
  const_cast<Network*>(this)->for_each_state(
      [&](const std::string& name, Tensor& t) { fn(name, t); });
}

bool Network::all_in_range() const {
  bool ok = true;
  for_each_state([&](const std::string&, const Tensor& t) { ok = ok && t.in_range(); });
  return ok;
}

double Network::saturated_fraction(double v) const {
  std::size_t total = 0, saturated = 0;
  auto count = [&](const Tensor& p) {
    for (double x : p.values()) {
      ++total;
      if (std::abs(pwl(x, v)) > 0.99) ++saturated;
    }
  };
  for (const auto& layer : layers_) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer); conv && conv->binarized) {
      count(conv->weight.value);
      count(conv->bias.value);
    } else if (const auto* fc = std::get_if<FcLayer>(&layer); fc && fc->binarized) {
      count(fc->weight.value);
      count(fc->bias.value);
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(saturated) / static_cast<double>(total);
}

std::vector<std::size_t> argmax_rows(const Tensor& logits) {
  const std::size_t rows = logits.dim(0), cols = logits.dim(1);
  std::vector<std::size_t> out(rows);
  const auto z = logits.values();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = z.data() + r * cols;
    // max_element returns the first maximum: ties go to the lowest index.
    out[r] = static_cast<std::size_t>(std::max_element(row, row + cols) - row);
  }
  return out;
}

double evaluate(const Network& net, const Dataset& ds, const ForwardContext& ctx,
                std::size_t batch_size) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
    const auto batch = gather(ds, idx);
    const auto pred = argmax_rows(net.infer(batch.images, ctx));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

ParameterMemory parameter_memory(const NetworkSpec& spec, Regime regime, int storage_bits) {
  const auto shapes = spec.output_shapes();
  const std::size_t elem = static_cast<std::size_t>(storage_bits) / 8;
  std::size_t learnable = 0, binarized = 0, stats = 0;
  Shape current = spec.input_shape;
  for (std::size_t row = 0; row < spec.layers.size(); ++row) {
    const auto& ls = spec.layers[row];
    const bool last = row + 1 == spec.layers.size();
    std::size_t weights = 0;
    if (ls.kind == LayerSpec::Kind::conv) {
      weights = ls.units * current[0] * ls.geometry.kernel * ls.geometry.kernel + ls.units;
    } else if (ls.kind == LayerSpec::Kind::fc) {
      weights = ls.units * shape_size(current) + ls.units;
    }
    learnable += weights;
    if (ls.binarized && !last) binarized += weights;
    if (ls.kind != LayerSpec::Kind::max_pool && !last) {
      learnable += 2 * ls.units;  // γ, β
      stats += 2 * ls.units;      // μ_r, σ_r
    }
    current = shapes[row];
  }
  ParameterMemory mem;
  mem.latent_bytes = learnable * elem;
  mem.optimizer_bytes = 2 * learnable * 4;
  mem.statistic_bytes = stats * elem;
  if (regime == Regime::deterministic || regime == Regime::stochastic) {
    mem.binary_bytes = (binarized + 7) / 8;
  }
  return mem;
}

}  // namespace pbnn
