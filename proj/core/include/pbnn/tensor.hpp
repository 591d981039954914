#pragma once

// Row-major N-dimensional arrays over a scalar backend. The real backend
// is the double-precision reference; the fixed backend holds values that
// are exactly representable in its Q-format (every constructor and kernel
// re-quantizes), so a fixed tensor is a faithful fixed-point image even
// though elements are kept as doubles.

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "pbnn/fxp.hpp"

namespace pbnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Backend {
 public:
  enum class Kind : std::uint8_t { real, fixed };

  static Backend real() { return Backend(Kind::real, {}); }
  static Backend fixed(const fxp::QFormat& fmt) { return Backend(Kind::fixed, fmt); }

  Kind kind() const { return kind_; }
  bool is_fixed() const { return kind_ == Kind::fixed; }
  /// Only meaningful for fixed backends.
  const fxp::QFormat& format() const { return fmt_; }

  /// Rounds and saturates x for fixed backends; identity for real.
  double apply(double x) const {
    return is_fixed() ? fxp::raw_to_real(fxp::quantize_raw(x, fmt_), fmt_) : x;
  }

  std::string to_string() const;

  friend bool operator==(const Backend& a, const Backend& b) {
    return a.kind_ == b.kind_ && (a.kind_ == Kind::real || a.fmt_ == b.fmt_);
  }

 private:
  Backend(Kind kind, const fxp::QFormat& fmt) : kind_(kind), fmt_(fmt) {}

  Kind kind_ = Kind::real;
  fxp::QFormat fmt_{};
};

class Tensor {
 public:
  Tensor() = default;
  /// Zero-filled.
  explicit Tensor(Shape shape, Backend backend = Backend::real());
  /// Values are quantized when the backend is fixed.
  Tensor(Shape shape, std::vector<double> values, Backend backend = Backend::real());

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows,
                          Backend backend = Backend::real());
  static Tensor identity(std::size_t n, Backend backend = Backend::real());
  static Tensor full(Shape shape, double value, Backend backend = Backend::real());

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  const Backend& backend() const { return backend_; }

  std::span<const double> values() const { return data_; }
  /// Mutable access is limited to real tensors; fixed tensors change only
  /// through re-quantizing constructors.
  std::span<double> mutable_values();

  double operator[](std::size_t i) const { return data_[i]; }
  double at(std::initializer_list<std::size_t> index) const;

  /// Raw two's-complement integer of element i (fixed backend only).
  std::int64_t raw(std::size_t i) const;

  Tensor reshaped(Shape shape) const;
  /// Re-quantizes into another backend (real → fixed rounds; fixed → real is exact).
  Tensor converted(const Backend& backend) const;
  Tensor as_real() const { return converted(Backend::real()); }

  /// True when every element is on the backend's grid and inside its range.
  bool in_range() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.backend_ == b.backend_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
  Backend backend_ = Backend::real();
};

/// C[M×N] = A[M×K]·B[K×N]. Fixed backends accumulate exact integer
/// products and re-quantize once per output element.
Tensor matmul(const Tensor& a, const Tensor& b);

struct ConvGeometry {
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t padding = 1;

  /// Output extent for an input extent; throws DimensionError when the
  /// sliding window does not tile the padded input exactly.
  std::size_t output_extent(std::size_t input) const;

  friend bool operator==(const ConvGeometry&, const ConvGeometry&) = default;
};

/// Zero-padded patch extraction of a C×H×W image into a
/// (C·k·k)×(H_out·W_out) matrix. Row index is (c·k + ki)·k + kj.
Tensor im2col(const Tensor& input, const ConvGeometry& geometry);

// Span-level kernels shared by the layers. All operate on row-major
// buffers; the real ones accumulate into C.
namespace kernels {

/// C[M×N] += A[M×K]·B[K×N]
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
/// C[M×N] += A[K×M]ᵀ·B[K×N]
void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);
/// C[M×N] += A[M×K]·B[N×K]ᵀ
void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c);

/// C[M×N] = requantize(A·B) where A, B, C hold values on fmt's grid.
void gemm_nn_fixed(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
                   std::span<const double> b, std::span<double> c, const fxp::QFormat& fmt);

void im2col(std::span<const double> image, std::size_t channels, std::size_t height,
            std::size_t width, const ConvGeometry& geometry, std::span<double> columns);
/// Scatter-adds columns back into a zero-initialised image (adjoint of im2col).
void col2im(std::span<const double> columns, std::size_t channels, std::size_t height,
            std::size_t width, const ConvGeometry& geometry, std::span<double> image);

}  // namespace kernels

}  // namespace pbnn
