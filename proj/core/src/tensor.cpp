#include "pbnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace pbnn {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) out << " x ";
    out << shape[i];
  }
  out << ')';
  return out.str();
}

std::string Backend::to_string() const {
  return is_fixed() ? "fixed(" + fmt_.to_string() + ")" : "real";
}

Tensor::Tensor(Shape shape, Backend backend)
    : shape_(std::move(shape)), data_(shape_size(shape_), 0.0), backend_(backend) {}

Tensor::Tensor(Shape shape, std::vector<double> values, Backend backend)
    : shape_(std::move(shape)), data_(std::move(values)), backend_(backend) {
  if (data_.size() != shape_size(shape_)) {
    throw DimensionError("Tensor: " + std::to_string(data_.size()) +
                         " values do not fill shape " + shape_to_string(shape_));
  }
  if (backend_.is_fixed()) {
    for (auto& x : data_) x = backend_.apply(x);
  }
}

Tensor Tensor::from_rows(std::initializer_list<std::initializer_list<double>> rows,
                         Backend backend) {
  const std::size_t m = rows.size();
  const std::size_t n = m == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw DimensionError("Tensor::from_rows: ragged rows");
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({m, n}, std::move(values), backend);
}

Tensor Tensor::identity(std::size_t n, Backend backend) {
  std::vector<double> values(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) values[i * n + i] = 1.0;
  return Tensor({n, n}, std::move(values), backend);
}

Tensor Tensor::full(Shape shape, double value, Backend backend) {
  const auto count = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(count, value), backend);
}

std::span<double> Tensor::mutable_values() {
  if (backend_.is_fixed()) {
    throw std::logic_error("Tensor: fixed-point tensors are not mutable in place");
  }
  return data_;
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) throw DimensionError("Tensor::at: rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= shape_[axis]) throw DimensionError("Tensor::at: index out of range");
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return data_[flat];
}

std::int64_t Tensor::raw(std::size_t i) const {
  if (!backend_.is_fixed()) throw std::logic_error("Tensor::raw on a real tensor");
  return static_cast<std::int64_t>(std::ldexp(data_.at(i), backend_.format().frac_bits));
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("Tensor::reshaped: " + shape_to_string(shape_) + " -> " +
                         shape_to_string(shape));
  }
  Tensor out = *this;
  out.shape_ = std::move(shape);
  return out;
}

Tensor Tensor::converted(const Backend& backend) const {
  if (backend == backend_) return *this;
  return Tensor(shape_, data_, backend);
}

bool Tensor::in_range() const {
  if (!backend_.is_fixed()) {
    return std::all_of(data_.begin(), data_.end(),
                       [](double x) { return std::isfinite(x); });
  }
  return std::all_of(data_.begin(), data_.end(), [&](double x) {
    return fxp::is_representable(x, backend_.format());
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw DimensionError("matmul: operands must be 2-D");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  if (!(a.backend() == b.backend())) throw DimensionError("matmul: backend mismatch");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> c(m * n, 0.0);
  if (a.backend().is_fixed()) {
    kernels::gemm_nn_fixed(m, n, k, a.values(), b.values(), c, a.backend().format());
  } else {
    kernels::gemm_nn(m, n, k, a.values(), b.values(), c);
  }
  return Tensor({m, n}, std::move(c), a.backend());
}

std::size_t ConvGeometry::output_extent(std::size_t input) const {
  if (kernel == 0 || stride == 0) throw DimensionError("conv geometry: zero kernel or stride");
  const std::size_t padded = input + 2 * padding;
  if (padded < kernel || (padded - kernel) % stride != 0) {
    throw DimensionError("conv geometry: extent " + std::to_string(input) + " with k=" +
                         std::to_string(kernel) + " s=" + std::to_string(stride) +
                         " p=" + std::to_string(padding) + " is not integral");
  }
  return (padded - kernel) / stride + 1;
}

Tensor im2col(const Tensor& input, const ConvGeometry& geometry) {
  if (input.rank() != 3) throw DimensionError("im2col: expected C x H x W input");
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t ho = geometry.output_extent(h), wo = geometry.output_extent(w);
  const std::size_t rows = c * geometry.kernel * geometry.kernel;
  std::vector<double> columns(rows * ho * wo);
  kernels::im2col(input.values(), c, h, w, geometry, columns);
  return Tensor({rows, ho * wo}, std::move(columns), input.backend());
}

namespace kernels {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c.data() + i * n;
    const double* arow = a.data() + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      if (aip == 0.0) continue;
      const double* brow = b.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = a.data() + p * m;
    const double* brow = b.data() + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = arow[i];
      if (api == 0.0) continue;
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
             std::span<const double> b, std::span<double> c) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a.data() + i * k;
    double* crow = c.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

void gemm_nn_fixed(std::size_t m, std::size_t n, std::size_t k, std::span<const double> a,
                   std::span<const double> b, std::span<double> c, const fxp::QFormat& fmt) {
  const int f = fmt.frac_bits;
  std::vector<std::int32_t> braw(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    braw[i] = static_cast<std::int32_t>(std::ldexp(b[i], f));
  }
  std::vector<std::int64_t> acc(n);
  for (std::size_t i = 0; i < m; ++i) {
    std::fill(acc.begin(), acc.end(), 0);
    for (std::size_t p = 0; p < k; ++p) {
      const auto aip = static_cast<std::int64_t>(std::ldexp(a[i * k + p], f));
      if (aip == 0) continue;
      const std::int32_t* brow = braw.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) acc[j] += aip * brow[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      c[i * n + j] = fxp::raw_to_real(fxp::saturate(fxp::round_shift(acc[j], f), fmt), fmt);
    }
  }
}

void im2col(std::span<const double> image, std::size_t channels, std::size_t height,
            std::size_t width, const ConvGeometry& g, std::span<double> columns) {
  const std::size_t ho = g.output_extent(height), wo = g.output_extent(width);
  const std::size_t cols = ho * wo;
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        double* row = columns.data() + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - pad;
          double* out = row + oh * wo;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(out, out + wo, 0.0);
            continue;
          }
          const double* src = image.data() + (c * height + static_cast<std::size_t>(ih)) * width;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - pad;
            out[ow] = (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width))
                          ? 0.0
                          : src[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

void col2im(std::span<const double> columns, std::size_t channels, std::size_t height,
            std::size_t width, const ConvGeometry& g, std::span<double> image) {
  const std::size_t ho = g.output_extent(height), wo = g.output_extent(width);
  const std::size_t cols = ho * wo;
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < g.kernel; ++ki) {
      for (std::size_t kj = 0; kj < g.kernel; ++kj) {
        const double* row = columns.data() + ((c * g.kernel + ki) * g.kernel + kj) * cols;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const auto ih = static_cast<std::ptrdiff_t>(oh * g.stride + ki) - pad;
          if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(height)) continue;
          double* dst = image.data() + (c * height + static_cast<std::size_t>(ih)) * width;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const auto iw = static_cast<std::ptrdiff_t>(ow * g.stride + kj) - pad;
            if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(width)) continue;
            dst[static_cast<std::size_t>(iw)] += row[oh * wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace kernels

}  // namespace pbnn
