#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "mhs/rng.hpp"
#include "mhs/tensor.hpp"

namespace mhs {

// ---------------------------------------------------------------------------
// Zero-order hold with a diagonal state matrix.
//
//   Ā = exp(Δ·A)
//   B̄ = φ(Δ·A) · Δ · B,   φ(z) = (e^z − 1) / z
//
// φ switches to 1 + z/2 + z²/6 for |z| < kZohSeriesThreshold.
// ---------------------------------------------------------------------------

inline constexpr double kZohSeriesThreshold = 1e-4;

double zoh_phi(double z) noexcept;
/// Derivative of zoh_phi as implemented (series branch included).
double zoh_phi_grad(double z) noexcept;

struct Discretized {
  Tensor a_bar;
  Tensor b_bar;
};

/// Elementwise ZOH. Operands share a shape or are single-element broadcasts.
Discretized discretize(const Tensor& delta, const Tensor& A, const Tensor& B);

/// h_t = Ā_t ⊙ h_{t−1} + B̄_t x_t, y_t = ⟨C_t, h_t⟩, h_{−1} = 0.
///
/// Ā, B̄, C are either time-invariant [N] or per-step [L×N]; x is [L].
/// If `states` is non-null it receives h as [L×N].
Tensor recurrence_scan(const Tensor& a_bar, const Tensor& b_bar, const Tensor& c, const Tensor& x,
                       Tensor* states = nullptr);

struct ConvKernel {
  Tensor taps;  // [L]
};

/// K̄[i] = ⟨C, Āⁱ ⊙ B̄⟩ for i < L. Only valid for time-invariant [N] parameters.
ConvKernel conv_kernel(const Tensor& a_bar, const Tensor& b_bar, const Tensor& c, std::size_t length);

/// Causal convolution y_t = Σ_{i≤t} K̄[i] x[t−i].
Tensor conv_scan(const Tensor& x, const ConvKernel& kernel);

// ---------------------------------------------------------------------------
// Selective (input-dependent) scan and the per-head sequence block.
// ---------------------------------------------------------------------------

struct SsmOptions {
  std::size_t state_dim = 16;
  std::size_t expansion = 2;
  std::size_t conv_width = 3;
  bool conv_on = true;

  bool operator==(const SsmOptions&) const = default;
};

/// Learnable arrays of one scan head's sequence block. E = expansion·S.
struct MambaWeights {
  Tensor w_in;     // [S×E]
  Tensor w_gate;   // [S×E]
  Tensor conv_w;   // [E×width], empty when the causal conv is off
  Tensor w_delta;  // [E×E]
  Tensor b_delta;  // [E]
  Tensor w_b;      // [E×N]
  Tensor w_c;      // [E×N]
  Tensor a;        // [E×N], continuous diagonal state matrix
  Tensor d_skip;   // [E]
  Tensor w_out;    // [E×S]

  std::size_t model_dim() const { return w_in.extent(0); }
  std::size_t inner_dim() const { return w_in.extent(1); }
  std::size_t state_dim() const { return a.extent(1); }
  bool has_conv() const { return !conv_w.empty(); }

  /// Named references in a fixed order; absent tensors (conv off) are skipped.
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;

  /// Same shapes, every entry zero.
  MambaWeights zeros_like() const;
};

/// Shapes for model dim S and `options`, all entries zero.
MambaWeights zero_mamba_weights(std::size_t model_dim, const SsmOptions& options);

/// A = −(1..N) per channel, Δ bias with softplus(b) log-uniform in
/// [1e−3, 1e−1], Glorot uniform projections, conv taps uniform in
/// ±1/√width, D = 1.
MambaWeights init_mamba_weights(std::size_t model_dim, const SsmOptions& options, Rng& rng);

std::size_t mamba_param_count(std::size_t model_dim, const SsmOptions& options);

/// Per-step parameters and states retained for the backward pass.
struct SelectiveTrace {
  Tensor delta_pre;  // [L×E]
  Tensor delta;      // [L×E]
  Tensor b;          // [L×N]
  Tensor c;          // [L×N]
  Tensor h;          // [L×E×N]
};

/// Explicit-parameter selective scan over u[L×D]: per channel d and state n,
/// (Ā, B̄) = ZOH(delta[t,d], A[d,n], B[t,n]), h = Ā h + B̄ u[t,d],
/// y[t,d] = Σ_n C[t,n] h[d,n] + d_skip[d] u[t,d].
Tensor selective_scan_core(const Tensor& u, const Tensor& delta, const Tensor& A, const Tensor& B,
                           const Tensor& C, const Tensor& d_skip, Tensor* states = nullptr);

/// Δ_t = softplus(u_t W_Δ + b_Δ), B_t = u_t W_B, C_t = u_t W_C, then
/// selective_scan_core. u is [L×E] with E = weights.inner_dim().
Tensor selective_scan(const Tensor& u, const MambaWeights& weights, SelectiveTrace* trace = nullptr);

struct MambaTrace {
  Tensor x;         // [L×S] input, step-major
  Tensor xin;       // [L×E] x W_in
  Tensor conv_out;  // [L×E] pre-activation after the causal conv
  Tensor v;         // [L×E] silu(conv_out)
  Tensor gate_pre;  // [L×E] x W_gate
  Tensor scan;      // [L×E] selective scan output
  SelectiveTrace selective;
};

/// One sequence [L×S] through the block:
/// v = silu(conv(x W_in)), g = silu(x W_gate), y = (scan(v) ⊙ g) W_out.
Tensor mamba_sequence(const Tensor& x, const MambaWeights& weights, MambaTrace* trace = nullptr);

/// Batched, channel-first: x_seq[B×S×L] -> [B×S×L].
Tensor mamba_block(const Tensor& x_seq, const MambaWeights& weights,
                   std::vector<MambaTrace>* traces = nullptr);

}  // namespace mhs
