#pragma once

#include <optional>
#include <string>
#include <string_view>

#include "mhs/tensor.hpp"

namespace mhs {

// Embedding section fusion: reduce the K position-aligned sections of one
// head, stacked as [B×K×S×L], to a single [B×S×L] section.

enum class EsfKind { Sum, MixturePooling, CvScaling, MixPoolCv };

/// Monotone gate applied to the CV map. Relu is max(0, cv − t); Sigmoid is
/// sigmoid(cv − t).
enum class GateKind { Relu, Sigmoid };

struct EsfScheme {
  EsfKind kind = EsfKind::CvScaling;
  double t = 0.5;
  double eps = 1e-6;
  GateKind gate = GateKind::Relu;

  bool uses_pooling() const noexcept {
    return kind == EsfKind::MixturePooling || kind == EsfKind::MixPoolCv;
  }
  bool uses_cv() const noexcept { return kind == EsfKind::CvScaling || kind == EsfKind::MixPoolCv; }
  bool operator==(const EsfScheme&) const = default;
};

std::string_view esf_kind_name(EsfKind kind) noexcept;
std::optional<EsfKind> parse_esf_kind(std::string_view name) noexcept;
std::string_view gate_kind_name(GateKind kind) noexcept;
std::optional<GateKind> parse_gate_kind(std::string_view name) noexcept;

/// Σ_k y_k, summed in k order.
Tensor fuse_sum(const Tensor& stack);

/// W[0]·mean_k(y) + W[1]·max_k(y). W holds exactly two entries.
Tensor fuse_mixpool(const Tensor& stack, const Tensor& w);

/// std_k(y) / (mean_k(y − min_k y) + eps) with population std. Needs K ≥ 2.
Tensor coefficient_variation(const Tensor& stack, double eps);

double gate_value(double cv, double t, GateKind kind) noexcept;
double gate_grad(double cv, double t, GateKind kind) noexcept;

/// fuse_sum ⊙ gate(cv − t).
Tensor fuse_cv_scale(const Tensor& stack, double t, double eps, GateKind gate = GateKind::Relu);

/// fuse_mixpool ⊙ gate(cv − t).
Tensor fuse_mixpool_cv(const Tensor& stack, const Tensor& w, double t, double eps,
                       GateKind gate = GateKind::Relu);

/// Dispatch on scheme.kind. `w` is read only by the pooling schemes.
Tensor fuse(const Tensor& stack, const EsfScheme& scheme, const Tensor& w);

/// The gate map for CV schemes (ones for the others), useful for diagnostics.
Tensor gate_map(const Tensor& stack, const EsfScheme& scheme);

}  // namespace mhs
