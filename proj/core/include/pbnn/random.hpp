#pragma once

// Counter-based randomness: every draw is a pure function of a key and an
// element index, so results do not depend on evaluation order.

#include <cstddef>
#include <cstdint>
#include <vector>

namespace pbnn {

/// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct RandomKey {
  std::uint64_t seed = 0;
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;
  std::uint64_t stream = 0;  // layer / purpose tag

  RandomKey with_stream(std::uint64_t s) const { return {seed, epoch, batch, s}; }

  std::uint64_t bits(std::uint64_t index) const {
    std::uint64_t h = mix64(seed);
    h = mix64(h ^ epoch);
    h = mix64(h ^ batch);
    h = mix64(h ^ stream);
    return mix64(h ^ index);
  }

  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform(std::uint64_t index) const {
    return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
  }
};

/// Sequential generator for shuffles and initialisation. Results are
/// identical on every platform (no std:: distributions involved).
class CounterRng {
 public:
  explicit CounterRng(RandomKey key) : key_(key) {}

  std::uint64_t next() { return key_.bits(counter_++); }
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Unbiased integer in [0, bound) by rejection.
  std::uint64_t below(std::uint64_t bound);
  /// Standard normal via Box-Muller.
  double normal();

  std::uint64_t counter() const { return counter_; }

 private:
  RandomKey key_;
  std::uint64_t counter_ = 0;
};

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, CounterRng& rng);

}  // namespace pbnn
