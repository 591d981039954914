#include "pbnn/fxp.hpp"

#include <cmath>
#include <stdexcept>

namespace pbnn::fxp {

QFormat QFormat::make(int total_bits, int frac_bits) {
  if (total_bits != 8 && total_bits != 16) {
    throw std::invalid_argument("QFormat: total_bits must be 8 or 16, got " +
                                std::to_string(total_bits));
  }
  if (frac_bits <= 0 || frac_bits >= total_bits) {
    throw std::invalid_argument("QFormat: frac_bits must lie in (0, " +
                                std::to_string(total_bits) + "), got " +
                                std::to_string(frac_bits));
  }
  return QFormat{total_bits, frac_bits};
}

double QFormat::resolution() const { return std::ldexp(1.0, -frac_bits); }
double QFormat::max_value() const { return raw_to_real(raw_max(), *this); }
double QFormat::min_value() const { return raw_to_real(raw_min(), *this); }

std::string QFormat::to_string() const {
  return "Q" + std::to_string(total_bits) + "." + std::to_string(frac_bits);
}

std::int64_t round_shift(std::int64_t value, int shift) {
  if (shift <= 0) return value;
  // Arithmetic shift floors toward -inf for negatives as well.
  const std::int64_t q = value >> shift;
  const std::int64_t rem = value - (q << shift);
  const std::int64_t half = std::int64_t{1} << (shift - 1);
  if (rem > half || (rem == half && (q & 1) != 0)) return q + 1;
  return q;
}

std::int64_t saturate(std::int64_t raw, const QFormat& fmt) {
  if (raw > fmt.raw_max()) return fmt.raw_max();
  if (raw < fmt.raw_min()) return fmt.raw_min();
  return raw;
}

std::int64_t quantize_raw(double x, const QFormat& fmt) {
  if (!std::isfinite(x)) {
    throw std::invalid_argument("quantize: non-finite input");
  }
  const double scaled = std::ldexp(x, fmt.frac_bits);
  // Clamp before conversion so huge inputs cannot overflow the cast.
  const auto hi = static_cast<double>(fmt.raw_max());
  const auto lo = static_cast<double>(fmt.raw_min());
  if (scaled >= hi) return fmt.raw_max();
  if (scaled <= lo) return fmt.raw_min();
  // nearbyint honours the default FE_TONEAREST mode: ties to even.
  return saturate(static_cast<std::int64_t>(std::nearbyint(scaled)), fmt);
}

double raw_to_real(std::int64_t raw, const QFormat& fmt) {
  return std::ldexp(static_cast<double>(raw), -fmt.frac_bits);
}

bool is_representable(double x, const QFormat& fmt) {
  if (!std::isfinite(x)) return false;
  const double scaled = std::ldexp(x, fmt.frac_bits);
  if (scaled != std::trunc(scaled)) return false;
  return scaled >= static_cast<double>(fmt.raw_min()) &&
         scaled <= static_cast<double>(fmt.raw_max());
}

FxScalar FxScalar::from_raw(std::int64_t raw, const QFormat& fmt) {
  return FxScalar(static_cast<std::int32_t>(saturate(raw, fmt)), fmt);
}

FxScalar quantize(double x, const QFormat& fmt) {
  return FxScalar::from_raw(quantize_raw(x, fmt), fmt);
}

namespace {

void require_same_format(const QFormat& a, const QFormat& b) {
  if (!(a == b)) {
    throw std::invalid_argument("fixed-point format mismatch: " + a.to_string() +
                                " vs " + b.to_string());
  }
}

}  // namespace

FxScalar fx_add(const FxScalar& a, const FxScalar& b) {
  require_same_format(a.format(), b.format());
  return FxScalar::from_raw(std::int64_t{a.raw()} + b.raw(), a.format());
}

FxScalar fx_mul(const FxScalar& a, const FxScalar& b) {
  require_same_format(a.format(), b.format());
  const std::int64_t product = std::int64_t{a.raw()} * b.raw();
  return FxScalar::from_raw(round_shift(product, a.format().frac_bits), a.format());
}

FxScalar fx_dot(std::span<const FxScalar> a, std::span<const FxScalar> b,
                const QFormat& fmt) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("fx_dot: length mismatch");
  }
  std::int64_t acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    require_same_format(a[i].format(), fmt);
    require_same_format(b[i].format(), fmt);
    acc += std::int64_t{a[i].raw()} * b[i].raw();
  }
  return FxScalar::from_raw(round_shift(acc, fmt.frac_bits), fmt);
}

}  // namespace pbnn::fxp
