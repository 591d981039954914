#include "pbnn/binary_params.hpp"

#include "pbnn/serialization.hpp"

namespace pbnn {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

namespace {

std::vector<std::int8_t> signs(const Tensor& t) {
  std::vector<std::int8_t> out(t.size());
  const auto v = t.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] > 0.0 ? 1 : -1;
  return out;
}

std::vector<double> copy(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

bool all_binary(const std::vector<std::int8_t>& v) {
  for (auto x : v) {
    if (x != 1 && x != -1) return false;
  }
  return true;
}

}  // namespace

BinaryParams extract_binary_params(const Network& net) {
  BinaryParams params;
  params.input_shape = net.spec().input_shape;
  params.classes = net.spec().classes;
  params.input_backend = net.numeric().activations;
  const auto& layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      if (!conv->binarized) throw std::invalid_argument("extract: real-valued convolution unsupported");
      params.ops.emplace_back(BinaryConv{conv->in_channels, conv->filters, conv->geometry,
                                         signs(conv->weight.value), signs(conv->bias.value)});
    } else if (const auto* fc = std::get_if<FcLayer>(&layer)) {
      if (fc->binarized) {
        params.ops.emplace_back(
            BinaryFc{fc->inputs, fc->outputs, signs(fc->weight.value), signs(fc->bias.value)});
      } else {
        params.ops.emplace_back(
            RealFc{fc->inputs, fc->outputs, copy(fc->weight.value), copy(fc->bias.value)});
      }
    } else if (const auto* bn = std::get_if<BatchNormState>(&layer)) {
      const bool folds = i + 1 < layers.size() && std::holds_alternative<ActivationLayer>(layers[i + 1]);
      if (folds) {
        ThresholdSign op;
        op.threshold = bn_thresholds(*bn);
        op.gamma = copy(bn->gamma.value);
        op.beta = copy(bn->beta.value);
        op.mean = copy(bn->running_mean);
        op.std = copy(bn->running_std);
        op.direction.resize(bn->channels);
        for (std::size_t ch = 0; ch < bn->channels; ++ch) {
          op.direction[ch] = op.gamma[ch] > 0.0 ? 1 : (op.gamma[ch] < 0.0 ? -1 : 0);
        }
        params.ops.emplace_back(std::move(op));
        ++i;
      } else {
        params.ops.emplace_back(AffineNorm{copy(bn->gamma.value), copy(bn->beta.value),
                                           copy(bn->running_mean), copy(bn->running_std)});
      }
    } else if (std::holds_alternative<ActivationLayer>(layer)) {
      params.ops.emplace_back(SignActivation{});
    } else if (const auto* pool = std::get_if<MaxPoolLayer>(&layer)) {
      params.ops.emplace_back(BinaryPool{pool->kernel, pool->stride});
    }
  }
  return params;
}

void BinaryParams::validate() const {
  if (input_shape.size() != 3) throw DimensionError("BinaryParams: input must be C x H x W");
  Shape current = input_shape;
  for (const auto& op : ops) {
    std::visit(overloaded{
                   [&](const BinaryConv& c) {
                     if (current.size() != 3 || current[0] != c.in_channels ||
                         c.weights.size() != c.filters * c.in_channels * c.geometry.kernel * c.geometry.kernel ||
                         c.bias.size() != c.filters || !all_binary(c.weights) || !all_binary(c.bias)) {
                       throw DimensionError("BinaryParams: malformed convolution");
                     }
                     current = {c.filters, c.geometry.output_extent(current[1]),
                                c.geometry.output_extent(current[2])};
                   },
                   [&](const BinaryFc& f) {
                     if (shape_size(current) != f.inputs || f.weights.size() != f.inputs * f.outputs ||
                         f.bias.size() != f.outputs || !all_binary(f.weights) || !all_binary(f.bias)) {
                       throw DimensionError("BinaryParams: malformed binary fully-connected layer");
                     }
                     current = {f.outputs};
                   },
                   [&](const RealFc& f) {
                     if (shape_size(current) != f.inputs || f.weights.size() != f.inputs * f.outputs ||
                         f.bias.size() != f.outputs) {
                       throw DimensionError("BinaryParams: malformed real fully-connected layer");
                     }
                     current = {f.outputs};
                   },
                   [&](const ThresholdSign& t) {
                     if (t.threshold.size() != current[0] || t.direction.size() != current[0] ||
                         t.gamma.size() != current[0]) {
                       throw DimensionError("BinaryParams: malformed threshold layer");
                     }
                   },
                   [&](const AffineNorm& a) {
                     if (a.gamma.size() != current[0]) throw DimensionError("BinaryParams: malformed norm");
                   },
                   [](const SignActivation&) {},
                   [&](const BinaryPool& p) {
                     const ConvGeometry g{p.kernel, p.stride, 0};
                     current = {current[0], g.output_extent(current[1]), g.output_extent(current[2])};
                   },
               },
               op);
  }
  if (current != Shape{classes}) throw DimensionError("BinaryParams: output is not " + std::to_string(classes) + " logits");
}

std::size_t BinaryParams::binary_entries() const {
  std::size_t n = 0;
  for (const auto& op : ops) {
    if (const auto* c = std::get_if<BinaryConv>(&op)) n += c->weights.size() + c->bias.size();
    if (const auto* f = std::get_if<BinaryFc>(&op)) n += f->weights.size() + f->bias.size();
  }
  return n;
}

namespace {

std::vector<double> widen(const std::vector<std::int8_t>& v) { return {v.begin(), v.end()}; }

}  // namespace

Tensor binary_logits(const BinaryParams& params, const Tensor& batch_in) {
  if (batch_in.rank() != 4 ||
      Shape(batch_in.shape().begin() + 1, batch_in.shape().end()) != params.input_shape) {
    throw DimensionError("binary_infer: input " + shape_to_string(batch_in.shape()) +
                         " does not match " + shape_to_string(params.input_shape));
  }
  const std::size_t batch = batch_in.dim(0);
  Shape shape = params.input_shape;
  const Tensor quantized = batch_in.converted(params.input_backend);
  std::vector<double> x(quantized.values().begin(), quantized.values().end());
  for (const auto& op : params.ops) {
    std::visit(
        overloaded{
            [&](const BinaryConv& c) {
              const std::size_t h = shape[1], w = shape[2];
              const std::size_t ho = c.geometry.output_extent(h), wo = c.geometry.output_extent(w);
              const std::size_t patch = c.in_channels * c.geometry.kernel * c.geometry.kernel;
              const auto weights = widen(c.weights);
              std::vector<double> out(batch * c.filters * ho * wo, 0.0);
              std::vector<double> columns(patch * ho * wo);
              for (std::size_t n = 0; n < batch; ++n) {
                kernels::im2col(std::span<const double>(x).subspan(n * c.in_channels * h * w, c.in_channels * h * w),
                                c.in_channels, h, w, c.geometry, columns);
                std::span<double> dst(out.data() + n * c.filters * ho * wo, c.filters * ho * wo);
                kernels::gemm_nn(c.filters, ho * wo, patch, weights, columns, dst);
                for (std::size_t f = 0; f < c.filters; ++f) {
                  for (std::size_t i = 0; i < ho * wo; ++i) dst[f * ho * wo + i] += c.bias[f];
                }
              }
              x = std::move(out);
              shape = {c.filters, ho, wo};
            },
            [&](const BinaryFc& f) {
              std::vector<double> out(batch * f.outputs, 0.0);
              kernels::gemm_nt(batch, f.outputs, f.inputs, x, widen(f.weights), out);
              for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t o = 0; o < f.outputs; ++o) out[b * f.outputs + o] += f.bias[o];
              }
              x = std::move(out);
              shape = {f.outputs};
            },
            [&](const RealFc& f) {
              std::vector<double> out(batch * f.outputs, 0.0);
              kernels::gemm_nt(batch, f.outputs, f.inputs, x, f.weights, out);
              for (std::size_t b = 0; b < batch; ++b) {
                for (std::size_t o = 0; o < f.outputs; ++o) out[b * f.outputs + o] += f.bias[o];
              }
              x = std::move(out);
              shape = {f.outputs};
            },
            [&](const ThresholdSign& t) {
              const std::size_t channels = shape[0];
              const std::size_t spatial = shape_size(shape) / channels;
              for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t ch = 0; ch < channels; ++ch) {
                  double* p = x.data() + (n * channels + ch) * spatial;
                  for (std::size_t i = 0; i < spatial; ++i) {
                    bool positive;
                    switch (t.direction[ch]) {
                      case 1: positive = p[i] > t.threshold[ch]; break;
                      case -1: positive = p[i] < t.threshold[ch]; break;
                      default:
                        positive = t.gamma[ch] * ((p[i] - t.mean[ch]) / t.std[ch]) + t.beta[ch] > 0.0;
                    }
                    p[i] = positive ? 1.0 : -1.0;
                  }
                }
              }
            },
            [&](const AffineNorm& a) {
              const std::size_t channels = shape[0];
              const std::size_t spatial = shape_size(shape) / channels;
              for (std::size_t n = 0; n < batch; ++n) {
                for (std::size_t ch = 0; ch < channels; ++ch) {
                  double* p = x.data() + (n * channels + ch) * spatial;
                  for (std::size_t i = 0; i < spatial; ++i) {
                    p[i] = a.gamma[ch] * ((p[i] - a.mean[ch]) / a.std[ch]) + a.beta[ch];
                  }
                }
              }
            },
            [&](const SignActivation&) {
              for (auto& v : x) v = sign_binary(v);
            },
            [&](const BinaryPool& p) {
              Shape full{batch};
              full.insert(full.end(), shape.begin(), shape.end());
              auto [y, tape] = maxpool_forward(Tensor(full, std::move(x)), p.kernel, p.stride);
              x.assign(y.values().begin(), y.values().end());
              shape = {y.dim(1), y.dim(2), y.dim(3)};
            },
        },
        op);
  }
  if (shape != Shape{params.classes}) throw DimensionError("binary_infer: malformed parameter chain");
  return Tensor({batch, params.classes}, std::move(x));
}

std::size_t binary_infer(const BinaryParams& params, const Tensor& image) {
  Shape shape{1};
  shape.insert(shape.end(), image.shape().begin(), image.shape().end());
  return argmax_rows(binary_logits(params, image.reshaped(shape)))[0];
}

double evaluate(const BinaryParams& params, const Dataset& ds, std::size_t batch_size) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
    const auto batch = gather(ds, idx);
    const auto pred = argmax_rows(binary_logits(params, batch.images));
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == batch.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kMagic = "PBNNBINP";
constexpr std::uint32_t kVersion = 1;

void put_signs(io::ByteWriter& w, const std::vector<std::int8_t>& v) {
  w.u64(v.size());
  for (auto x : v) w.u8(static_cast<std::uint8_t>(x));
}
std::vector<std::int8_t> get_signs(io::ByteReader& r) {
  std::vector<std::int8_t> v(r.u64());
  for (auto& x : v) x = static_cast<std::int8_t>(r.u8());
  return v;
}
void put_reals(io::ByteWriter& w, const std::vector<double>& v) {
  w.u64(v.size());
  for (auto x : v) w.f64(x);
}
std::vector<double> get_reals(io::ByteReader& r) {
  std::vector<double> v(r.u64());
  for (auto& x : v) x = r.f64();
  return v;
}

}  // namespace

void save_binary_params(const BinaryParams& params, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.u32(static_cast<std::uint32_t>(params.input_shape.size()));
  for (auto d : params.input_shape) w.u64(d);
  w.u64(params.classes);
  w.u8(params.input_backend.is_fixed());
  w.u8(static_cast<std::uint8_t>(params.input_backend.format().total_bits));
  w.u8(static_cast<std::uint8_t>(params.input_backend.format().frac_bits));
  w.u64(params.ops.size());
  for (const auto& op : params.ops) {
    w.u8(static_cast<std::uint8_t>(op.index()));
    std::visit(overloaded{
                   [&](const BinaryConv& c) {
                     w.u64(c.in_channels);
                     w.u64(c.filters);
                     w.u64(c.geometry.kernel);
                     w.u64(c.geometry.stride);
                     w.u64(c.geometry.padding);
                     put_signs(w, c.weights);
                     put_signs(w, c.bias);
                   },
                   [&](const BinaryFc& f) {
                     w.u64(f.inputs);
                     w.u64(f.outputs);
                     put_signs(w, f.weights);
                     put_signs(w, f.bias);
                   },
                   [&](const RealFc& f) {
                     w.u64(f.inputs);
                     w.u64(f.outputs);
                     put_reals(w, f.weights);
                     put_reals(w, f.bias);
                   },
                   [&](const ThresholdSign& t) {
                     put_reals(w, t.threshold);
                     put_signs(w, t.direction);
                     put_reals(w, t.gamma);
                     put_reals(w, t.beta);
                     put_reals(w, t.mean);
                     put_reals(w, t.std);
                   },
                   [&](const AffineNorm& a) {
                     put_reals(w, a.gamma);
                     put_reals(w, a.beta);
                     put_reals(w, a.mean);
                     put_reals(w, a.std);
                   },
                   [](const SignActivation&) {},
                   [&](const BinaryPool& p) {
                     w.u64(p.kernel);
                     w.u64(p.stride);
                   },
               },
               op);
  }
  io::write_container(path, kMagic, kVersion, w.bytes());
}

BinaryParams load_binary_params(const std::filesystem::path& path) {
  const auto payload = io::read_container(path, kMagic, kVersion);
  io::ByteReader r(payload);
  BinaryParams params;
  params.input_shape.resize(r.u32());
  for (auto& d : params.input_shape) d = r.u64();
  params.classes = r.u64();
  const bool fixed = r.u8() != 0;
  const int total = r.u8();
  const int frac = r.u8();
  params.input_backend = fixed ? Backend::fixed(fxp::QFormat::make(total, frac)) : Backend::real();
  const auto count = r.u64();
  for (std::uint64_t i = 0; i < count; ++i) {
    switch (r.u8()) {
      case 0: {
        BinaryConv c;
        c.in_channels = r.u64();
        c.filters = r.u64();
        c.geometry.kernel = r.u64();
        c.geometry.stride = r.u64();
        c.geometry.padding = r.u64();
        c.weights = get_signs(r);
        c.bias = get_signs(r);
        params.ops.emplace_back(std::move(c));
        break;
      }
      case 1: {
        BinaryFc f;
        f.inputs = r.u64();
        f.outputs = r.u64();
        f.weights = get_signs(r);
        f.bias = get_signs(r);
        params.ops.emplace_back(std::move(f));
        break;
      }
      case 2: {
        RealFc f;
        f.inputs = r.u64();
        f.outputs = r.u64();
        f.weights = get_reals(r);
        f.bias = get_reals(r);
        params.ops.emplace_back(std::move(f));
        break;
      }
      case 3: {
        ThresholdSign t;
        t.threshold = get_reals(r);
        t.direction = get_signs(r);
        t.gamma = get_reals(r);
        t.beta = get_reals(r);
        t.mean = get_reals(r);
        t.std = get_reals(r);
        params.ops.emplace_back(std::move(t));
        break;
      }
      case 4: {
        AffineNorm a;
        a.gamma = get_reals(r);
        a.beta = get_reals(r);
        a.mean = get_reals(r);
        a.std = get_reals(r);
        params.ops.emplace_back(std::move(a));
        break;
      }
      case 5:
        params.ops.emplace_back(SignActivation{});
        break;
      case 6: {
        BinaryPool p;
        p.kernel = r.u64();
        p.stride = r.u64();
        params.ops.emplace_back(p);
        break;
      }
      default:
        throw io::FormatError(path.string() + ": unknown op tag");
    }
  }
  if (!r.done()) throw io::FormatError(path.string() + ": trailing bytes");
  params.validate();
  return params;
}

}  // namespace pbnn
