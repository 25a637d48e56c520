#include "mhs/esf.hpp"

#include <algorithm>
#include <cmath>

namespace mhs {

std::string_view esf_kind_name(EsfKind kind) noexcept {
  switch (kind) {
    case EsfKind::Sum: return "sum";
    case EsfKind::MixturePooling: return "mixpool";
    case EsfKind::CvScaling: return "cv";
    case EsfKind::MixPoolCv: return "mixpool_cv";
  }
  return "unknown";
}

std::optional<EsfKind> parse_esf_kind(std::string_view name) noexcept {
  for (EsfKind k : {EsfKind::Sum, EsfKind::MixturePooling, EsfKind::CvScaling, EsfKind::MixPoolCv})
    if (esf_kind_name(k) == name) return k;
  return std::nullopt;
}

std::string_view gate_kind_name(GateKind kind) noexcept {
  return kind == GateKind::Relu ? "relu" : "sigmoid";
}

std::optional<GateKind> parse_gate_kind(std::string_view name) noexcept {
  if (name == "relu") return GateKind::Relu;
  if (name == "sigmoid") return GateKind::Sigmoid;
  return std::nullopt;
}

namespace {

struct StackDims {
  std::size_t batch, routes, positions;  // positions = S·L
};

StackDims stack_dims(const Tensor& stack) {
  if (stack.rank() != 4) {
    throw DimensionError("section stack must be B×K×S×L, got " + shape_str(stack.shape()));
  }
  return {stack.extent(0), stack.extent(1), stack.extent(2) * stack.extent(3)};
}

Tensor fused_shape(const Tensor& stack) {
  return Tensor({stack.extent(0), stack.extent(2), stack.extent(3)});
}

// Calls f(out_index, values_ptr, stride) for every (b, s, l); values are the K
// entries at that position.
template <typename F>
void for_each_position(const Tensor& stack, F&& f) {
  const StackDims d = stack_dims(stack);
  for (std::size_t b = 0; b < d.batch; ++b) {
    const double* base = stack.data().data() + b * d.routes * d.positions;
    for (std::size_t p = 0; p < d.positions; ++p) f(b * d.positions + p, base + p, d.positions);
  }
}

double cv_at(const double* y, std::size_t stride, std::size_t K, double eps) {
  double lo = y[0];
  for (std::size_t k = 1; k < K; ++k) lo = std::min(lo, y[k * stride]);
  // Shift by the min first: std is shift invariant and equal sections give
  // exact zeros.
  double mean = 0.0;
  for (std::size_t k = 0; k < K; ++k) mean += y[k * stride] - lo;
  mean /= static_cast<double>(K);
  double ss = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const double d = (y[k * stride] - lo) - mean;
    ss += d * d;
  }
  const double sd = std::sqrt(ss / static_cast<double>(K));
  return sd / (mean + eps);
}

void check_w(const Tensor& w) {
  if (w.size() != 2) throw DimensionError("mixture-of-poolings W must have 2 entries, got " + shape_str(w.shape()));
}

void check_cv_args(const Tensor& stack, double eps) {
  if (stack_dims(stack).routes < 2) {
    throw ContractError("coefficient of variation needs K >= 2 sections; use the sum scheme for K = 1");
  }
  if (!(eps > 0.0)) throw ContractError("CV eps must be > 0");
}

}  // namespace

Tensor fuse_sum(const Tensor& stack) {
  const std::size_t K = stack_dims(stack).routes;
  Tensor out = fused_shape(stack);
  for_each_position(stack, [&](std::size_t o, const double* y, std::size_t stride) {
    double acc = 0.0;
    for (std::size_t k = 0; k < K; ++k) acc += y[k * stride];
    out[o] = acc;
  });
  return out;
}

Tensor fuse_mixpool(const Tensor& stack, const Tensor& w) {
  check_w(w);
  const std::size_t K = stack_dims(stack).routes;
  Tensor out = fused_shape(stack);
  for_each_position(stack, [&](std::size_t o, const double* y, std::size_t stride) {
    double acc = 0.0, hi = y[0];
    for (std::size_t k = 0; k < K; ++k) {
      acc += y[k * stride];
      hi = std::max(hi, y[k * stride]);
    }
    out[o] = w[0] * (acc / static_cast<double>(K)) + w[1] * hi;
  });
  return out;
}

Tensor coefficient_variation(const Tensor& stack, double eps) {
  check_cv_args(stack, eps);
  const std::size_t K = stack_dims(stack).routes;
  Tensor out = fused_shape(stack);
  for_each_position(stack, [&](std::size_t o, const double* y, std::size_t stride) {
    out[o] = cv_at(y, stride, K, eps);
  });
  return out;
}

double gate_value(double cv, double t, GateKind kind) noexcept {
  return kind == GateKind::Relu ? relu(cv - t) : sigmoid(cv - t);
}

double gate_grad(double cv, double t, GateKind kind) noexcept {
  if (kind == GateKind::Relu) return cv - t > 0.0 ? 1.0 : 0.0;
  const double s = sigmoid(cv - t);
  return s * (1.0 - s);
}

Tensor fuse_cv_scale(const Tensor& stack, double t, double eps, GateKind gate) {
  if (t < 0.0) throw ContractError("CV threshold t must be >= 0");
  Tensor cv = coefficient_variation(stack, eps);
  Tensor out = fuse_sum(stack);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= gate_value(cv[i], t, gate);
  return out;
}

Tensor fuse_mixpool_cv(const Tensor& stack, const Tensor& w, double t, double eps, GateKind gate) {
  if (t < 0.0) throw ContractError("CV threshold t must be >= 0");
  Tensor cv = coefficient_variation(stack, eps);
  Tensor out = fuse_mixpool(stack, w);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= gate_value(cv[i], t, gate);
  return out;
}

Tensor fuse(const Tensor& stack, const EsfScheme& scheme, const Tensor& w) {
  switch (scheme.kind) {
    case EsfKind::Sum: return fuse_sum(stack);
    case EsfKind::MixturePooling: return fuse_mixpool(stack, w);
    case EsfKind::CvScaling: return fuse_cv_scale(stack, scheme.t, scheme.eps, scheme.gate);
    case EsfKind::MixPoolCv: return fuse_mixpool_cv(stack, w, scheme.t, scheme.eps, scheme.gate);
  }
  return {};
}

Tensor gate_map(const Tensor& stack, const EsfScheme& scheme) {
  if (!scheme.uses_cv()) return Tensor({stack.extent(0), stack.extent(2), stack.extent(3)}, 1.0);
  Tensor g = coefficient_variation(stack, scheme.eps);
  for (double& v : g.data()) v = gate_value(v, scheme.t, scheme.gate);
  return g;
}

}  // namespace mhs
