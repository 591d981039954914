#pragma once

// Central finite-difference checks of every backward pass. Each case draws
// a random small instance from its seed, contracts the forward output with a
// random cotangent R (loss = Σ R ⊙ y) and compares the analytic gradient of
// every input and parameter against (L(x + h) − L(x − h)) / 2h.

#include <cstdint>
#include <string>
#include <vector>

namespace pbnn::testing {

struct GradCase {
  std::string name;
  double rel_error = 0.0;  // worst relative error over the case's gradients
};

using GradCaseFn = GradCase (*)(std::uint64_t seed);

GradCase conv_progressive_case(std::uint64_t seed);
GradCase conv_real_case(std::uint64_t seed);
GradCase fc_progressive_case(std::uint64_t seed);
GradCase fc_real_case(std::uint64_t seed);
GradCase batch_norm_case(std::uint64_t seed);
GradCase maxpool_case(std::uint64_t seed);
GradCase pwl_activation_case(std::uint64_t seed);
GradCase relu_activation_case(std::uint64_t seed);
GradCase theta_tanh_case(std::uint64_t seed);
GradCase theta_pwl_case(std::uint64_t seed);
GradCase cross_entropy_case(std::uint64_t seed);

struct GradFamily {
  const char* name;
  GradCaseFn fn;
};
std::vector<GradFamily> gradient_families();

}  // namespace pbnn::testing
