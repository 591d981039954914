#pragma once

// Saturating two's-complement fixed-point arithmetic in 8- and 16-bit
// Q-formats. Rounding is round-to-nearest-even everywhere; overflow
// saturates to the format limits and never wraps.

#include <cstdint>
#include <span>
#include <string>

namespace pbnn::fxp {

struct QFormat {
  int total_bits = 16;
  int frac_bits = 8;

  /// Validating constructor; throws std::invalid_argument unless
  /// total_bits is 8 or 16 and 0 < frac_bits < total_bits.
  static QFormat make(int total_bits, int frac_bits);

  std::int64_t raw_max() const { return (std::int64_t{1} << (total_bits - 1)) - 1; }
  std::int64_t raw_min() const { return -(std::int64_t{1} << (total_bits - 1)); }
  double resolution() const;
  double max_value() const;
  double min_value() const;
  std::string to_string() const;  // "Q16.8"

  friend bool operator==(const QFormat&, const QFormat&) = default;
};

inline constexpr QFormat kQ8_4{8, 4};
inline constexpr QFormat kQ16_8{16, 8};

/// Divides by 2^shift, rounding half to even. shift >= 0.
std::int64_t round_shift(std::int64_t value, int shift);

/// Clamps a raw integer into the format's two's-complement range.
std::int64_t saturate(std::int64_t raw, const QFormat& fmt);

/// Raw integer nearest to x·2^frac_bits (ties to even), saturated.
/// Throws std::invalid_argument for non-finite x.
std::int64_t quantize_raw(double x, const QFormat& fmt);

/// Real value of a raw integer in the given format (exact).
double raw_to_real(std::int64_t raw, const QFormat& fmt);

/// True when x is exactly representable: on the 2^-frac grid and in range.
bool is_representable(double x, const QFormat& fmt);

class FxScalar {
 public:
  FxScalar() = default;

  /// Saturates raw into the format.
  static FxScalar from_raw(std::int64_t raw, const QFormat& fmt);

  std::int32_t raw() const { return raw_; }
  const QFormat& format() const { return fmt_; }
  double to_real() const { return raw_to_real(raw_, fmt_); }

  friend bool operator==(const FxScalar&, const FxScalar&) = default;

 private:
  FxScalar(std::int32_t raw, const QFormat& fmt) : raw_(raw), fmt_(fmt) {}

  std::int32_t raw_ = 0;
  QFormat fmt_{};
};

FxScalar quantize(double x, const QFormat& fmt);

// Binary ops require matching formats (std::invalid_argument otherwise).
FxScalar fx_add(const FxScalar& a, const FxScalar& b);
FxScalar fx_mul(const FxScalar& a, const FxScalar& b);

/// Multiply-accumulate in a 64-bit accumulator with a single final
/// re-quantization into fmt. Every operand must carry fmt; lengths must agree.
FxScalar fx_dot(std::span<const FxScalar> a, std::span<const FxScalar> b,
                const QFormat& fmt);

}  // namespace pbnn::fxp
