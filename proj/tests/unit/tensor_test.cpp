#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "pbnn/fxp.hpp"
#include "pbnn/tensor.hpp"

using namespace pbnn;
using pbnn::testing::direct_conv;
using pbnn::testing::naive_matmul;
using pbnn::testing::random_tensor;
using pbnn::testing::random_values;

namespace {
std::vector<double> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }
}  // namespace

TEST(Tensor, ConstructionChecksElementCount) {
  EXPECT_THROW(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  const Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
  for (double x : t.values()) EXPECT_EQ(x, 0.0);
}

TEST(Tensor, FixedBackendQuantizesOnConstruction) {
  const Tensor t({3}, {0.03, 100.0, 0.5}, Backend::fixed(fxp::kQ8_4));
  EXPECT_EQ(t.values()[0], 0.0);
  EXPECT_EQ(t.values()[1], 7.9375);
  EXPECT_EQ(t.values()[2], 0.5);
  EXPECT_EQ(t.raw(2), 8);
  EXPECT_TRUE(t.in_range());
  Tensor copy = t;
  EXPECT_THROW(copy.mutable_values(), std::logic_error);
}

TEST(Tensor, AtAndReshape) {
  const auto t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.at({1, 2}), 6.0);
  EXPECT_THROW(t.at({2, 0}), DimensionError);
  const auto r = t.reshaped({3, 2});
  EXPECT_EQ(r.at({2, 1}), 6.0);
  EXPECT_THROW(t.reshaped({4, 2}), DimensionError);
  EXPECT_THROW(Tensor::from_rows({{1, 2}, {3}}), DimensionError);
}

TEST(Matmul, IdentityLeavesOperandUnchanged) {
  const auto v = Tensor::from_rows({{1.5}, {-2}, {3}});
  EXPECT_EQ(matmul(Tensor::identity(3), v), v);
}

TEST(Matmul, SmallProduct) {
  const auto c = matmul(Tensor::from_rows({{1, 2}, {3, 4}}), Tensor::from_rows({{1}, {1}}));
  EXPECT_EQ(c, Tensor::from_rows({{3}, {7}}));
}

TEST(Matmul, MatchesNaiveLoop) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_tensor({4, 5}, seed), b = random_tensor({5, 6}, seed + 100);
    const auto c = matmul(a, b);
    const auto expect = naive_matmul(vec(a), vec(b), 4, 5, 6);
    for (std::size_t i = 0; i < expect.size(); ++i) EXPECT_NEAR(c.values()[i], expect[i], 1e-14);
  }
}

TEST(Matmul, ShapeAndBackendMismatch) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
  EXPECT_THROW(matmul(Tensor({2}), Tensor({2, 3})), DimensionError);
  EXPECT_THROW(matmul(Tensor({2, 2}), Tensor({2, 2}, Backend::fixed(fxp::kQ8_4))), DimensionError);
}

TEST(Matmul, FixedEqualsFxDotPerElement) {
  const auto fmt = fxp::kQ16_8;
  const Backend fixed = Backend::fixed(fmt);
  const auto a = random_tensor({3, 7}, 1, -4, 4).converted(fixed);
  const auto b = random_tensor({7, 2}, 2, -4, 4).converted(fixed);
  const auto c = matmul(a, b);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      std::vector<fxp::FxScalar> row, col;
      for (std::size_t p = 0; p < 7; ++p) {
        row.push_back(fxp::quantize(a.at({i, p}), fmt));
        col.push_back(fxp::quantize(b.at({p, j}), fmt));
      }
      EXPECT_EQ(c.at({i, j}), fxp::fx_dot(row, col, fmt).to_real());
    }
}

TEST(Matmul, FixedConvergesToRealAsFractionBitsGrow) {
  const std::size_t k = 5;
  const auto a = random_tensor({4, k}, 7), b = random_tensor({k, 3}, 8);
  const auto exact = matmul(a, b);
  for (int f : {6, 8, 10, 12}) {
    const Backend fixed = Backend::fixed(fxp::QFormat::make(16, f));
    const auto c = matmul(a.converted(fixed), b.converted(fixed));
    const double bound = std::ldexp(1.0, -f + 1) * static_cast<double>(k);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_LE(std::abs(c.values()[i] - exact.values()[i]), bound);
  }
}

TEST(Im2col, ShapeArithmetic) {
  const auto cols = im2col(Tensor({1, 3, 3}), {3, 1, 1});
  EXPECT_EQ(cols.shape(), (Shape{9, 9}));
}

TEST(Im2col, NonOverlappingPatchIsTheFlattenedInput) {
  const Tensor x({1, 2, 2}, {1, 2, 3, 4});
  const auto cols = im2col(x, {2, 2, 0});
  EXPECT_EQ(cols.shape(), (Shape{4, 1}));
  EXPECT_EQ(vec(cols), (std::vector<double>{1, 2, 3, 4}));
}

TEST(Im2col, NonIntegralExtentThrows) {
  EXPECT_THROW(im2col(Tensor({1, 4, 4}), {3, 2, 0}), DimensionError);
  EXPECT_THROW(im2col(Tensor({1, 2, 2}), {3, 1, 0}), DimensionError);
}

TEST(Im2col, MatmulEqualsDirectConvolution) {
  struct Case {
    std::size_t c, h, f;
    ConvGeometry g;
  };
  // Downscaled versions of the architecture's layer geometries plus strided ones.
  const Case cases[] = {{3, 8, 4, {3, 1, 1}}, {4, 6, 8, {3, 1, 1}}, {2, 6, 3, {2, 2, 0}},
                        {2, 7, 5, {3, 2, 1}}, {1, 5, 2, {5, 1, 2}}, {3, 4, 2, {1, 1, 0}}};
  std::uint64_t seed = 0;
  for (const auto& cs : cases) {
    const auto x = random_tensor({cs.c, cs.h, cs.h}, ++seed);
    const auto w = random_values(cs.f * cs.c * cs.g.kernel * cs.g.kernel, ++seed);
    const auto cols = im2col(x, cs.g);
    const std::size_t ho = cs.g.output_extent(cs.h);
    const auto got = naive_matmul(w, vec(cols), cs.f, cs.c * cs.g.kernel * cs.g.kernel, ho * ho);
    const auto want = direct_conv(vec(x), cs.c, cs.h, cs.h, w, {}, cs.f, cs.g.kernel, cs.g.stride, cs.g.padding);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Im2col, Col2imIsTheAdjoint) {
  const ConvGeometry g{3, 2, 1};
  const std::size_t c = 2, h = 7;
  const auto x = random_values(c * h * h, 1);
  const std::size_t rows = c * 9, cols = g.output_extent(h) * g.output_extent(h);
  const auto y = random_values(rows * cols, 2);
  std::vector<double> colx(rows * cols), imgy(c * h * h, 0.0);
  kernels::im2col(x, c, h, h, g, colx);
  kernels::col2im(y, c, h, h, g, imgy);
  double lhs = 0.0, rhs = 0.0;
  for (std::size_t i = 0; i < colx.size(); ++i) lhs += colx[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * imgy[i];
  EXPECT_NEAR(lhs, rhs, 1e-12);
}

TEST(Kernels, TransposedProductsMatchNaive) {
  const std::size_t m = 3, n = 4, k = 5;
  const auto a = random_values(m * k, 1), b = random_values(k * n, 2);
  std::vector<double> at(k * m), bt(n * k);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) at[p * m + i] = a[i * k + p];
  for (std::size_t p = 0; p < k; ++p)
    for (std::size_t j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j];
  const auto want = naive_matmul(a, b, m, k, n);
  std::vector<double> c1(m * n, 0.0), c2(m * n, 0.0);
  kernels::gemm_tn(m, n, k, at, b, c1);
  kernels::gemm_nt(m, n, k, a, bt, c2);
  for (std::size_t i = 0; i < want.size(); ++i) {
    EXPECT_NEAR(c1[i], want[i], 1e-14);
    EXPECT_NEAR(c2[i], want[i], 1e-14);
  }
}
