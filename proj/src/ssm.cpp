#include "mhs/ssm.hpp"

#include <cmath>

namespace mhs {

double zoh_phi(double z) noexcept {
  if (std::fabs(z) < kZohSeriesThreshold) return 1.0 + z / 2.0 + z * z / 6.0;
  return std::expm1(z) / z;
}

double zoh_phi_grad(double z) noexcept {
  if (std::fabs(z) < kZohSeriesThreshold) return 0.5 + z / 3.0;
  // d/dz (e^z − 1)/z = (z e^z − (e^z − 1)) / z²
  const double em1 = std::expm1(z);
  return (z * (em1 + 1.0) - em1) / (z * z);
}

namespace {

double broadcast_at(const Tensor& t, std::size_t i) { return t.size() == 1 ? t[0] : t[i]; }

void require_finite(const Tensor& t, const char* what) {
  if (!all_finite(t)) throw DomainError(std::string(what) + " contains non-finite values");
}

// Row t of a time-invariant [N] or per-step [L×N] parameter.
const double* param_row(const Tensor& p, std::size_t t, std::size_t n) {
  return p.rank() == 1 ? p.data().data() : p.data().data() + t * n;
}

void check_param(const Tensor& p, std::size_t L, std::size_t N, const char* name) {
  const bool ok = (p.rank() == 1 && p.extent(0) == N) ||
                  (p.rank() == 2 && p.extent(0) == L && p.extent(1) == N);
  if (!ok) {
    throw DimensionError(std::string(name) + " must be [N] or [L×N] with L=" + std::to_string(L) +
                         ", N=" + std::to_string(N) + ", got " + shape_str(p.shape()));
  }
}

}  // namespace

Discretized discretize(const Tensor& delta, const Tensor& A, const Tensor& B) {
  std::size_t n = 1;
  Shape shape{1};
  for (const Tensor* t : {&delta, &A, &B}) {
    if (t->size() == 1) continue;
    if (n != 1 && t->size() != n) {
      throw DimensionError("discretize operand shapes disagree: " + shape_str(delta.shape()) + ", " +
                           shape_str(A.shape()) + ", " + shape_str(B.shape()));
    }
    n = t->size();
    shape = t->shape();
  }
  Discretized out{Tensor(shape), Tensor(shape)};
  for (std::size_t i = 0; i < n; ++i) {
    const double dt = broadcast_at(delta, i);
    if (!(dt > 0.0)) throw DomainError("discretize requires delta > 0, got " + std::to_string(dt));
    const double z = dt * broadcast_at(A, i);
    out.a_bar[i] = std::exp(z);
    out.b_bar[i] = zoh_phi(z) * dt * broadcast_at(B, i);
  }
  return out;
}

Tensor recurrence_scan(const Tensor& a_bar, const Tensor& b_bar, const Tensor& c, const Tensor& x,
                       Tensor* states) {
  if (x.rank() != 1) throw DimensionError("recurrence_scan expects x as [L], got " + shape_str(x.shape()));
  const std::size_t L = x.extent(0);
  const std::size_t N = a_bar.extent(a_bar.rank() - 1);
  check_param(a_bar, L, N, "a_bar");
  check_param(b_bar, L, N, "b_bar");
  check_param(c, L, N, "c");

  std::vector<double> h(N, 0.0);
  Tensor y({L});
  if (states) *states = Tensor({L, N});
  for (std::size_t t = 0; t < L; ++t) {
    const double* ab = param_row(a_bar, t, N);
    const double* bb = param_row(b_bar, t, N);
    const double* cc = param_row(c, t, N);
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) {
      h[n] = ab[n] * h[n] + bb[n] * x[t];
      acc += cc[n] * h[n];
    }
    y[t] = acc;
    if (states) std::copy(h.begin(), h.end(), states->data().begin() + static_cast<long>(t * N));
  }
  return y;
}

ConvKernel conv_kernel(const Tensor& a_bar, const Tensor& b_bar, const Tensor& c, std::size_t length) {
  if (a_bar.rank() != 1 || b_bar.rank() != 1 || c.rank() != 1) {
    throw ContractError("conv_kernel needs time-invariant [N] parameters; per-step parameters have no "
                        "convolutional form");
  }
  const std::size_t N = a_bar.extent(0);
  if (b_bar.extent(0) != N || c.extent(0) != N) {
    throw DimensionError("conv_kernel parameter shapes disagree");
  }
  if (length == 0) throw DimensionError("conv_kernel length must be >= 1");
  ConvKernel k{Tensor({length})};
  std::vector<double> power(b_bar.data().begin(), b_bar.data().end());  // Āⁱ ⊙ B̄
  for (std::size_t i = 0; i < length; ++i) {
    double acc = 0.0;
    for (std::size_t n = 0; n < N; ++n) acc += c[n] * power[n];
    k.taps[i] = acc;
    for (std::size_t n = 0; n < N; ++n) power[n] *= a_bar[n];
  }
  return k;
}

Tensor conv_scan(const Tensor& x, const ConvKernel& kernel) {
  if (x.rank() != 1 || kernel.taps.rank() != 1 || x.extent(0) != kernel.taps.extent(0)) {
    throw DimensionError("conv_scan length mismatch: x " + shape_str(x.shape()) + ", kernel " +
                         shape_str(kernel.taps.shape()));
  }
  const std::size_t L = x.extent(0);
  Tensor y({L});
  for (std::size_t t = 0; t < L; ++t) {
    double acc = 0.0;
    for (std::size_t i = 0; i <= t; ++i) acc += kernel.taps[i] * x[t - i];
    y[t] = acc;
  }
  return y;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, Tensor*>> MambaWeights::named() {
  std::vector<std::pair<std::string, Tensor*>> out{{"w_in", &w_in}, {"w_gate", &w_gate}};
  if (has_conv()) out.emplace_back("conv_w", &conv_w);
  out.insert(out.end(), {{"w_delta", &w_delta},
                         {"b_delta", &b_delta},
                         {"w_b", &w_b},
                         {"w_c", &w_c},
                         {"a", &a},
                         {"d_skip", &d_skip},
                         {"w_out", &w_out}});
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> MambaWeights::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<MambaWeights*>(this)->named()) out.emplace_back(name, t);
  return out;
}

MambaWeights MambaWeights::zeros_like() const {
  MambaWeights z = *this;
  for (auto& [name, t] : z.named()) t->fill(0.0);
  return z;
}

MambaWeights zero_mamba_weights(std::size_t model_dim, const SsmOptions& options) {
  const std::size_t S = model_dim, E = options.expansion * model_dim, N = options.state_dim;
  if (S == 0 || E == 0 || N == 0) throw ValidationError("mamba block dimensions must be positive");
  MambaWeights w;
  w.w_in = Tensor({S, E});
  w.w_gate = Tensor({S, E});
  if (options.conv_on) {
    if (options.conv_width == 0) throw ValidationError("conv_width must be >= 1 when conv is on");
    w.conv_w = Tensor({E, options.conv_width});
  }
  w.w_delta = Tensor({E, E});
  w.b_delta = Tensor({E});
  w.w_b = Tensor({E, N});
  w.w_c = Tensor({E, N});
  w.a = Tensor({E, N});
  w.d_skip = Tensor({E});
  w.w_out = Tensor({E, S});
  return w;
}

namespace {

void glorot(Tensor& t, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(t.extent(0) + t.extent(1)));
  for (double& v : t.data()) v = rng.uniform(-bound, bound);
}

}  // namespace

MambaWeights init_mamba_weights(std::size_t model_dim, const SsmOptions& options, Rng& rng) {
  MambaWeights w = zero_mamba_weights(model_dim, options);
  const std::size_t E = w.inner_dim(), N = options.state_dim;
  glorot(w.w_in, rng);
  glorot(w.w_gate, rng);
  if (w.has_conv()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(options.conv_width));
    for (double& v : w.conv_w.data()) v = rng.uniform(-bound, bound);
  }
  glorot(w.w_delta, rng);
  // Log-uniform Δ in [1e−3, 1e−1], stored as its softplus inverse.
  const double lo = std::log(1e-3), hi = std::log(1e-1);
  for (double& b : w.b_delta.data()) {
    const double dt = std::exp(rng.uniform(lo, hi));
    b = dt + std::log(-std::expm1(-dt));
  }
  glorot(w.w_b, rng);
  glorot(w.w_c, rng);
  for (std::size_t e = 0; e < E; ++e)
    for (std::size_t n = 0; n < N; ++n) w.a(e, n) = -static_cast<double>(n + 1);
  w.d_skip.fill(1.0);
  glorot(w.w_out, rng);
  return w;
}

std::size_t mamba_param_count(std::size_t model_dim, const SsmOptions& options) {
  const std::size_t S = model_dim, E = options.expansion * model_dim, N = options.state_dim;
  std::size_t count = 2 * S * E;                  // w_in, w_gate
  if (options.conv_on) count += E * options.conv_width;
  count += E * E + E;                             // w_delta, b_delta
  count += 3 * E * N;                             // w_b, w_c, a
  count += E;                                     // d_skip
  count += E * S;                                 // w_out
  return count;
}

Tensor selective_scan_core(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& B,
                           const Tensor& C, const Tensor& d_skip, Tensor* states) {
  if (u.rank() != 2) throw DimensionError("selective_scan expects u as [L×D], got " + shape_str(u.shape()));
  const std::size_t L = u.extent(0), D = u.extent(1);
  if (A.rank() != 2 || A.extent(0) != D) {
    throw DimensionError("A must be [D×N] with D=" + std::to_string(D) + ", got " + shape_str(A.shape()));
  }
  const std::size_t N = A.extent(1);
  if (!delta.same_shape(u)) {
    throw DimensionError("delta " + shape_str(delta.shape()) + " must match u " + shape_str(u.shape()));
  }
  check_param(B, L, N, "B");
  check_param(C, L, N, "C");
  if (d_skip.size() != D) throw DimensionError("d_skip must have D entries");
  require_finite(u, "selective_scan input");

  std::vector<double> h(D * N, 0.0);
  Tensor y({L, D});
  if (states) *states = Tensor({L, D, N});
  for (std::size_t t = 0; t < L; ++t) {
    const double* bt = param_row(B, t, N);
    const double* ct = param_row(C, t, N);
    for (std::size_t d = 0; d < D; ++d) {
      const double dt = delta(t, d);
      if (!(dt > 0.0)) throw DomainError("selective_scan step size must be > 0");
      const double ut = u(t, d);
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double z = dt * A(d, n);
        double& hn = h[d * N + n];
        hn = std::exp(z) * hn + zoh_phi(z) * dt * bt[n] * ut;
        acc += ct[n] * hn;
      }
      y(t, d) = acc + d_skip[d] * ut;
    }
    if (states) std::copy(h.begin(), h.end(), states->data().begin() + static_cast<long>(t * D * N));
  }
  return y;
}

Tensor selective_scan(const Tensor& u, const MambaWeights& weights, SelectiveTrace* trace) {
  if (u.rank() != 2 || u.extent(1) != weights.inner_dim()) {
    throw DimensionError("selective_scan input " + shape_str(u.shape()) + " does not match inner dim " +
                         std::to_string(weights.inner_dim()));
  }
  require_finite(u, "selective_scan input");
  Tensor delta_pre = matmul(u, weights.w_delta);
  const std::size_t E = weights.inner_dim();
  for (std::size_t i = 0; i < delta_pre.size(); ++i) delta_pre[i] += weights.b_delta[i % E];
  Tensor delta = elementwise(delta_pre, UnaryOp::Softplus);
  Tensor b = matmul(u, weights.w_b);
  Tensor c = matmul(u, weights.w_c);
  Tensor y = selective_scan_core(u, delta, weights.a, b, c, weights.d_skip, trace ? &trace->h : nullptr);
  if (trace) {
    trace->delta_pre = std::move(delta_pre);
    trace->delta = std::move(delta);
    trace->b = std::move(b);
    trace->c = std::move(c);
  }
  return y;
}

Tensor mamba_sequence(const Tensor& x, const MambaWeights& weights, MambaTrace* trace) {
  if (x.rank() != 2 || x.extent(1) != weights.model_dim()) {
    throw DimensionError("mamba block input " + shape_str(x.shape()) + " does not match model dim " +
                         std::to_string(weights.model_dim()));
  }
  const std::size_t L = x.extent(0), E = weights.inner_dim();
  Tensor xin = matmul(x, weights.w_in);
  Tensor conv_out = xin;
  if (weights.has_conv()) {
    const std::size_t width = weights.conv_w.extent(1);
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t e = 0; e < E; ++e) {
        double acc = 0.0;
        for (std::size_t j = 0; j < width; ++j) {
          const std::size_t lag = width - 1 - j;
          if (lag <= t) acc += weights.conv_w(e, j) * xin(t - lag, e);
        }
        conv_out(t, e) = acc;
      }
    }
  }
  Tensor v = elementwise(conv_out, UnaryOp::Silu);
  Tensor gate_pre = matmul(x, weights.w_gate);
  SelectiveTrace sel;
  Tensor scan = selective_scan(v, weights, trace ? &sel : nullptr);
  Tensor gated(scan.shape());
  for (std::size_t i = 0; i < gated.size(); ++i) gated[i] = scan[i] * silu(gate_pre[i]);
  Tensor y = matmul(gated, weights.w_out);
  if (trace) {
    trace->x = x;
    trace->xin = std::move(xin);
    trace->conv_out = std::move(conv_out);
    trace->v = std::move(v);
    trace->gate_pre = std::move(gate_pre);
    trace->scan = std::move(scan);
    trace->selective = std::move(sel);
  }
  return y;
}

Tensor mamba_block(const Tensor& x_seq, const MambaWeights& weights, std::vector<MambaTrace>* traces) {
  if (x_seq.rank() != 3 || x_seq.extent(1) != weights.model_dim()) {
    throw DimensionError("mamba_block expects B×S×L with S=" + std::to_string(weights.model_dim()) +
                         ", got " + shape_str(x_seq.shape()));
  }
  const std::size_t B = x_seq.extent(0), S = x_seq.extent(1), L = x_seq.extent(2);
  Tensor out(x_seq.shape());
  if (traces) traces->assign(B, {});
  for (std::size_t b = 0; b < B; ++b) {
    Tensor x({L, S});
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t t = 0; t < L; ++t) x(t, s) = x_seq(b, s, t);
    Tensor y = mamba_sequence(x, weights, traces ? &(*traces)[b] : nullptr);
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t t = 0; t < L; ++t) out(b, s, t) = y(t, s);
  }
  return out;
}

}  // namespace mhs
