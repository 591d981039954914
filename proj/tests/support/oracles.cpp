#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace pbnn::testing {

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo, double hi) {
  std::mt19937_64 gen(seed);
  std::vector<double> v(n);
  // Manual mapping instead of std::uniform_real_distribution keeps values
  // identical across standard libraries.
  for (auto& x : v) x = lo + (hi - lo) * (static_cast<double>(gen() >> 11) * 0x1.0p-53);
  return v;
}

Tensor random_tensor(Shape shape, std::uint64_t seed, double lo, double hi) {
  const auto n = shape_size(shape);
  return Tensor(std::move(shape), random_values(n, seed, lo, hi));
}

std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = s;
    }
  return c;
}

std::vector<double> direct_conv(const std::vector<double>& image, std::size_t c, std::size_t h,
                                std::size_t w, const std::vector<double>& weights,
                                const std::vector<double>& bias, std::size_t f, std::size_t k,
                                std::size_t stride, std::size_t pad) {
  const std::size_t ho = (h + 2 * pad - k) / stride + 1;
  const std::size_t wo = (w + 2 * pad - k) / stride + 1;
  std::vector<double> out(f * ho * wo, 0.0);
  for (std::size_t o = 0; o < f; ++o)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x) {
        double s = bias.empty() ? 0.0 : bias[o];
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j) {
              const long iy = static_cast<long>(y * stride + i) - static_cast<long>(pad);
              const long ix = static_cast<long>(x * stride + j) - static_cast<long>(pad);
              if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
              s += weights[((o * c + ch) * k + i) * k + j] *
                   image[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)];
            }
        out[(o * ho + y) * wo + x] = s;
      }
  return out;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

}  // namespace pbnn::testing
