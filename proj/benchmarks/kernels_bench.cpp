#include <benchmark/benchmark.h>

#include "pbnn/binary_params.hpp"
#include "pbnn/fxp.hpp"
#include "pbnn/layers.hpp"
#include "pbnn/network.hpp"
#include "pbnn/random.hpp"
#include "pbnn/tensor.hpp"

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  pbnn::CounterRng rng(pbnn::RandomKey{seed, 0, 0, 7});
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
  return v;
}

void BM_GemmReal(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    std::fill(c.begin(), c.end(), 0.0);
    pbnn::kernels::gemm_nn(n, n, n, a, b, c);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_GemmReal)->Arg(64)->Arg(128)->Arg(256);

void BM_GemmFixedQ16(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto fmt = pbnn::fxp::kQ16_8;
  auto a = random_values(n * n, 1), b = random_values(n * n, 2);
  for (auto& x : a) x = pbnn::fxp::raw_to_real(pbnn::fxp::quantize_raw(x, fmt), fmt);
  for (auto& x : b) x = pbnn::fxp::raw_to_real(pbnn::fxp::quantize_raw(x, fmt), fmt);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    pbnn::kernels::gemm_nn_fixed(n, n, n, a, b, c, fmt);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_GemmFixedQ16)->Arg(64)->Arg(128)->Arg(256);

void BM_Im2col(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const pbnn::ConvGeometry g{3, 1, 1};
  const auto image = random_values(c * 32 * 32, 3);
  std::vector<double> columns(c * 9 * 32 * 32);
  for (auto _ : state) {
    pbnn::kernels::im2col(image, c, 32, 32, g, columns);
    benchmark::DoNotOptimize(columns.data());
  }
}
BENCHMARK(BM_Im2col)->Arg(3)->Arg(16)->Arg(128);

void BM_FxDot(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto fmt = pbnn::fxp::kQ16_8;
  std::vector<pbnn::fxp::FxScalar> a, b;
  const auto va = random_values(n, 4), vb = random_values(n, 5);
  for (std::size_t i = 0; i < n; ++i) {
    a.push_back(pbnn::fxp::quantize(va[i], fmt));
    b.push_back(pbnn::fxp::quantize(vb[i], fmt));
  }
  for (auto _ : state) benchmark::DoNotOptimize(pbnn::fxp::fx_dot(a, b, fmt));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_FxDot)->Arg(1152)->Arg(8192);

void BM_TinyTrainStep(benchmark::State& state) {
  const bool fixed = state.range(0) != 0;
  pbnn::NumericConfig numeric;
  if (fixed) numeric = {pbnn::Backend::fixed(pbnn::fxp::kQ16_8), pbnn::Backend::fixed(pbnn::fxp::QFormat::make(16, 14))};
  auto net = pbnn::Network::build(pbnn::NetworkSpec::tiny(32), numeric, 1);
  pbnn::Tensor x({8, 3, 32, 32}, random_values(8 * 3 * 32 * 32, 6, 2.0));
  std::vector<std::uint8_t> labels{0, 1, 2, 3, 4, 5, 6, 7};
  pbnn::ForwardContext ctx;
  ctx.regime = pbnn::Regime::progressive;
  ctx.activations = numeric.activations;
  ctx.training = true;
  for (auto _ : state) {
    pbnn::ForwardTape tape;
    const auto logits = net.forward(x, ctx, &tape);
    auto loss = pbnn::cross_entropy(logits, labels);
    net.backward(loss.grad_logits, tape);
    net.adam_step(1e-3);
  }
  state.SetItemsProcessed(state.iterations() * 8);
}
BENCHMARK(BM_TinyTrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_BinaryInferTiny(benchmark::State& state) {
  auto net = pbnn::Network::build(pbnn::NetworkSpec::tiny(32), {}, 1);
  const auto params = pbnn::extract_binary_params(net);
  pbnn::Tensor x({100, 3, 32, 32}, random_values(100 * 3 * 32 * 32, 7, 2.0));
  for (auto _ : state) benchmark::DoNotOptimize(pbnn::binary_logits(params, x));
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_BinaryInferTiny)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
