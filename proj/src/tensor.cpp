#include "mhs/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <limits>
#include <sstream>

namespace mhs {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

namespace {

void check_extents(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one axis");
  for (std::size_t e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

// Splits a shape around `axis` into (outer, extent, inner) for strided loops.
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (data_.size() != shape_numel(shape_)) {
    throw DimensionError("data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
  }
}

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape_));
  }
  return shape_[axis];
}

Shape Tensor::strides() const {
  Shape s(shape_.size(), 1);
  for (std::size_t i = shape_.size(); i-- > 1;) s[i - 1] = s[i] * shape_[i];
  return s;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool Tensor::bit_equal(const Tensor& other) const noexcept {
  return shape_ == other.shape_ &&
         (data_.empty() ||
          std::memcmp(data_.data(), other.data_.data(), data_.size() * sizeof(double)) == 0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.extent(1) != b.extent(0)) {
    throw DimensionError("matmul shape mismatch: " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      out[i * n + j] = acc;
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.extent(0), n = a.extent(1);
  Tensor out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  return out;
}

Tensor reduce(const Tensor& x, std::size_t axis, ReduceKind kind) {
  if (axis >= x.rank()) {
    throw DimensionError("reduce axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(x.shape()));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Shape out_shape;
  for (std::size_t i = 0; i < x.rank(); ++i)
    if (i != axis) out_shape.push_back(x.shape()[i]);
  if (out_shape.empty()) out_shape.push_back(1);
  Tensor out(out_shape);
  const double count = static_cast<double>(s.extent);

  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const double* base = x.data().data() + o * s.extent * s.inner + in;
      double r = 0.0;
      switch (kind) {
        case ReduceKind::Sum:
        case ReduceKind::Mean:
          for (std::size_t k = 0; k < s.extent; ++k) r += base[k * s.inner];
          if (kind == ReduceKind::Mean) r /= count;
          break;
        case ReduceKind::Max:
          r = base[0];
          for (std::size_t k = 1; k < s.extent; ++k) r = std::max(r, base[k * s.inner]);
          break;
        case ReduceKind::Min:
          r = base[0];
          for (std::size_t k = 1; k < s.extent; ++k) r = std::min(r, base[k * s.inner]);
          break;
        case ReduceKind::Std: {
          double mean = 0.0;
          for (std::size_t k = 0; k < s.extent; ++k) mean += base[k * s.inner];
          mean /= count;
          double ss = 0.0;
          for (std::size_t k = 0; k < s.extent; ++k) {
            const double d = base[k * s.inner] - mean;
            ss += d * d;
          }
          r = std::sqrt(ss / count);
          break;
        }
      }
      out[o * s.inner + in] = r;
    }
  }
  return out;
}

Tensor elementwise(const Tensor& x, UnaryOp op) {
  Tensor out = x;
  for (double& v : out.data()) {
    switch (op) {
      case UnaryOp::Exp: v = std::exp(v); break;
      case UnaryOp::Relu: v = relu(v); break;
      case UnaryOp::Sigmoid: v = sigmoid(v); break;
      case UnaryOp::Softplus: v = softplus(v); break;
      case UnaryOp::Silu: v = silu(v); break;
    }
  }
  return out;
}

Tensor elementwise(const Tensor& x, const Tensor& y, BinaryOp op) {
  const bool x_scalar = x.size() == 1, y_scalar = y.size() == 1;
  if (!x.same_shape(y) && !x_scalar && !y_scalar) {
    throw DimensionError("elementwise shape mismatch: " + shape_str(x.shape()) + " vs " +
                         shape_str(y.shape()));
  }
  Tensor out = (x_scalar && !y_scalar) ? Tensor(y.shape()) : Tensor(x.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double a = x_scalar ? x[0] : x[i];
    const double b = y_scalar ? y[0] : y[i];
    switch (op) {
      case BinaryOp::Add: out[i] = a + b; break;
      case BinaryOp::Sub: out[i] = a - b; break;
      case BinaryOp::Mul: out[i] = a * b; break;
    }
  }
  return out;
}

Tensor scale(const Tensor& x, double alpha) {
  Tensor out = x;
  for (double& v : out.data()) v *= alpha;
  return out;
}

Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const std::size_t n = x.extent(axis);
  if (gamma.size() != n || beta.size() != n) {
    throw DimensionError("layer_norm affine extents " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " do not match axis extent " +
                         std::to_string(n));
  }
  const AxisSplit s = split_axis(x.shape(), axis);
  Tensor out(x.shape());
  const double count = static_cast<double>(n);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * n * s.inner + in;
      double mean = 0.0;
      for (std::size_t k = 0; k < n; ++k) mean += x[base + k * s.inner];
      mean /= count;
      double var = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        const double d = x[base + k * s.inner] - mean;
        var += d * d;
      }
      var /= count;
      const double denom = std::sqrt(var + eps);
      for (std::size_t k = 0; k < n; ++k) {
        const double centered = x[base + k * s.inner] - mean;
        // Zero variance with eps = 0 would be 0/0; a constant slice normalizes to 0.
        const double xhat = centered == 0.0 ? 0.0 : centered / denom;
        out[base + k * s.inner] = xhat * gamma[k] + beta[k];
      }
    }
  }
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw DimensionError("max_abs_diff shape mismatch: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::fabs(v));
  return m;
}

bool all_finite(const Tensor& a) noexcept {
  return std::all_of(a.data().begin(), a.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace mhs
