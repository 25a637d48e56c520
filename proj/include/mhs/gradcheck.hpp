#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mhs/esf.hpp"
#include "mhs/tensor.hpp"

namespace mhs {

/// Central-difference Jacobian of f at x over the probed flat coordinates.
/// Row p holds (f(x + h e_p) − f(x − h e_p)) / 2h flattened. An empty
/// `coords` probes every coordinate.
Tensor numeric_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h,
                        std::span<const std::size_t> coords = {});

/// Up to `max_probes` distinct coordinates of [0, n), sorted, drawn from `seed`.
std::vector<std::size_t> probe_coordinates(std::size_t n, std::size_t max_probes, std::uint64_t seed);

/// |a − b| / max(|a|, |b|, 1e−8)
double relative_error(double analytic, double numeric) noexcept;

struct ParamGradError {
  std::string name;
  double max_abs_err = 0.0;
  double max_rel_err = 0.0;
  std::size_t probes = 0;
};

enum class GradStatus { Pass, Fail, Inconclusive };

std::string_view grad_status_name(GradStatus s) noexcept;

struct GradReport {
  std::string op;
  GradStatus status = GradStatus::Inconclusive;
  double step = 0.0;
  double tol = 0.0;
  std::size_t attempts = 0;  // draws needed to clear the nondifferentiable points
  std::vector<ParamGradError> params;

  double max_rel_err() const noexcept;
  double max_abs_err() const noexcept;
  bool passed() const noexcept { return status == GradStatus::Pass; }
  std::string summary() const;
};

/// Sizes of the randomly drawn problem. Fields irrelevant to an op are ignored.
struct GradDims {
  std::size_t batch = 1;
  std::size_t height = 4;
  std::size_t width = 4;
  std::size_t channels = 12;  // C_l for the full forward
  std::size_t heads = 3;
  std::size_t subspace = 4;   // S
  std::size_t routes = 4;     // K
  std::size_t length = 8;     // L for sequence ops
  std::size_t state = 2;      // N
  std::size_t inner = 3;      // D for the bare selective scan
  EsfKind esf = EsfKind::CvScaling;  // scheme for the full forward
  double t = 0.5;
  std::size_t max_probes = 8;  // per parameter tensor
};

/// Known op ids, in `check grads` order.
const std::vector<std::string>& gradcheck_ops();

/// Draws inputs and weights from `seed`, redraws (up to 10 times) until every
/// CV sits more than 1e−3 from t and every relevant max/min leads its runner-up
/// by more than 1e−3, then compares the analytic gradient of ⟨ȳ, f⟩ against
/// central differences. Status is Inconclusive when no clean draw is found.
///
/// op ∈ recurrence, selective_scan, mamba_block, esf_sum, esf_mixpool, esf_cv,
/// esf_mixpool_cv, layer_norm, forward.
GradReport gradcheck_module(std::string_view op, const GradDims& dims, std::uint64_t seed, double h = 1e-5,
                            double tol = 1e-5);

}  // namespace mhs
