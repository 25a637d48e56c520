#pragma once

#include "mhs/esf.hpp"
#include "mhs/mhs.hpp"
#include "mhs/ssm.hpp"
#include "mhs/tensor.hpp"

namespace mhs {

// Hand-derived reverse-mode passes. Each takes the forward inputs (or the
// trace a forward call filled in) plus the output cotangent and returns the
// cotangents of every input. Gradients of learnable arrays accumulate into a
// caller-provided structure shaped like the weights.
//
// Subgradient conventions: relu'(0) = 0, max/min route to the lowest
// attaining index, std at zero spread contributes 0.

struct RecurrenceGrads {
  Tensor x;      // [L]
  Tensor a_bar;  // [N]
  Tensor b_bar;  // [N]
  Tensor c;      // [N]
};

/// Adjoint of recurrence_scan with time-invariant [N] parameters:
/// λ_t = Ā ⊙ λ_{t+1} + C ȳ_t, x̄_t = ⟨B̄, λ_t⟩.
RecurrenceGrads backward_recurrence(const Tensor& a_bar, const Tensor& b_bar, const Tensor& c,
                                    const Tensor& x, const Tensor& dy);

/// Adjoint of selective_scan(u, weights). Weight cotangents accumulate into
/// `grads` (w_delta, b_delta, w_b, w_c, a, d_skip); returns du [L×E].
Tensor backward_selective_scan(const Tensor& u, const SelectiveTrace& trace, const MambaWeights& weights,
                               const Tensor& dy, MambaWeights& grads);

/// Adjoint of mamba_sequence; returns dx [L×S].
Tensor backward_mamba_sequence(const MambaTrace& trace, const MambaWeights& weights, const Tensor& dy,
                               MambaWeights& grads);

/// Adjoint of mamba_block over the batch; dy and the result are [B×S×L].
Tensor backward_mamba_block(const std::vector<MambaTrace>& traces, const MambaWeights& weights,
                            const Tensor& dy, MambaWeights& grads);

struct EsfGrads {
  Tensor stack;  // [B×K×S×L]
  Tensor w;      // [2] for pooling schemes, zeros otherwise
};

EsfGrads backward_esf(const EsfScheme& scheme, const Tensor& stack, const Tensor& w, const Tensor& dz);

struct LayerNormGrads {
  Tensor x;
  Tensor gamma;
  Tensor beta;
};

LayerNormGrads backward_layer_norm(const Tensor& x, std::size_t axis, const Tensor& gamma, double eps,
                                   const Tensor& dy);

struct ForwardGrads {
  Tensor x;           // [B×H×W×C_l]
  MhsWeights weights;
};

/// Adjoint of the full module forward. `trace` must come from forward() on
/// the same input, weights and config.
ForwardGrads backward_forward(const ForwardTrace& trace, const MhsWeights& weights, const MhsConfig& config,
                              const Tensor& dout);

}  // namespace mhs
