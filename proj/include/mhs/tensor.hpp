#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mhs/errors.hpp"

namespace mhs {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles with an explicit shape.
///
/// Every extent is positive and `size() == product(shape)`. All arithmetic in
/// this library runs in 64-bit; 32-bit only exists as an at-rest format in the
/// weights container.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor({1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  std::size_t extent(std::size_t axis) const;
  Shape strides() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  template <typename... Idx>
  double& operator()(Idx... idx) noexcept {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }
  template <typename... Idx>
  double operator()(Idx... idx) const noexcept {
    return data_[offset({static_cast<std::size_t>(idx)...})];
  }

  /// Same data, new shape with equal element count.
  Tensor reshaped(Shape shape) const;

  void fill(double v);
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  /// Bitwise equality of shape and payload.
  bool bit_equal(const Tensor& other) const noexcept;

 private:
  std::size_t offset(std::initializer_list<std::size_t> idx) const noexcept {
    std::size_t off = 0;
    std::size_t axis = 0;
    for (std::size_t i : idx) off = off * shape_[axis++] + i;
    return off;
  }

  Shape shape_;
  std::vector<double> data_;
};

enum class ReduceKind { Mean, Max, Min, Std, Sum };
enum class UnaryOp { Exp, Relu, Sigmoid, Softplus, Silu };
enum class BinaryOp { Add, Sub, Mul };

// Scalar kernels shared by the tensor ops and the hand-written backward passes.
inline double relu(double x) noexcept { return x > 0.0 ? x : 0.0; }
inline double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
/// log(1 + e^x), overflow-free on both tails.
inline double softplus(double x) noexcept {
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::fabs(x)));
}
inline double silu(double x) noexcept { return x * sigmoid(x); }
inline double silu_grad(double x) noexcept {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

/// a[M×K] · b[K×N], accumulated left to right over K.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Transpose of a rank-2 tensor.
Tensor transpose(const Tensor& a);

/// Removes `axis`. Std is the population form (divide by count).
Tensor reduce(const Tensor& x, std::size_t axis, ReduceKind kind);

Tensor elementwise(const Tensor& x, UnaryOp op);
/// Shapes must match, or one side must hold a single element.
Tensor elementwise(const Tensor& x, const Tensor& y, BinaryOp op);
Tensor scale(const Tensor& x, double alpha);

/// (x - mean) / sqrt(var + eps) * gamma + beta with statistics along `axis` only.
Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, const Tensor& beta,
                  double eps);

/// Max absolute elementwise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);
bool all_finite(const Tensor& a) noexcept;

}  // namespace mhs
