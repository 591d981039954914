#pragma once

// Independent reference implementations used as test oracles. They share
// no code with the library kernels.

#include <cstdint>
#include <vector>

#include "pbnn/tensor.hpp"

namespace pbnn::testing {

std::vector<double> random_values(std::size_t n, std::uint64_t seed, double lo = -1.0, double hi = 1.0);
Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0);

/// Triple loop, row-major.
std::vector<double> naive_matmul(const std::vector<double>& a, const std::vector<double>& b,
                                 std::size_t m, std::size_t k, std::size_t n);

/// Sliding-window convolution of one C×H×W image with f×C×k×k weights.
std::vector<double> direct_conv(const std::vector<double>& image, std::size_t c, std::size_t h,
                                std::size_t w, const std::vector<double>& weights,
                                const std::vector<double>& bias, std::size_t f, std::size_t k,
                                std::size_t stride, std::size_t pad);

/// ||a − b|| / max(||a||, ||b||); 0 when both vanish.
double relative_error(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace pbnn::testing
