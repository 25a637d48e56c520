#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mhs/esf.hpp"
#include "mhs/scan_geometry.hpp"
#include "mhs/ssm.hpp"
#include "mhs/tensor.hpp"

namespace mhs {

/// Hyperparameters of one multi-head scan module.
struct MhsConfig {
  std::size_t channels = 96;        // C_l, input and output width
  std::size_t heads = 3;            // n
  std::size_t subspace = 32;        // S
  std::size_t routes = 4;           // K, one per starting corner
  std::vector<ScanPattern> patterns;  // one per head; empty selects the defaults
  EsfScheme esf;
  std::array<double, 2> esf_w_init{0.5, 0.5};
  bool tail_projection = true;
  SsmOptions ssm;
  std::uint64_t seed = 0;
  double ln_eps = 1e-5;

  /// Throws ValidationError listing every offending field.
  void validate() const;

  /// `patterns` if given, else n = 4 uses all four patterns in order and any
  /// other n cycles through snake, diagonal, spiral, raster.
  std::vector<ScanPattern> head_patterns() const;

  std::size_t concat_dim() const noexcept { return heads * subspace; }
};

/// All learnable arrays of the module.
struct MhsWeights {
  std::vector<Tensor> head_proj;      // n × [S×C_l]
  std::vector<MambaWeights> mamba;    // n, shared by the K routes of each head
  std::vector<Tensor> esf_w;          // n × [1×2] for pooling schemes, else empty
  Tensor ln_gamma;                    // [n·S]
  Tensor ln_beta;                     // [n·S]
  Tensor tail_proj;                   // [C_l × n·S], empty when the tail is off

  /// Stable names such as "head.0.proj", "head.1.mamba.w_in", "ln.gamma".
  std::vector<std::pair<std::string, Tensor*>> named();
  std::vector<std::pair<std::string, const Tensor*>> named() const;

  MhsWeights zeros_like() const;
  bool bit_equal(const MhsWeights& other) const;
};

/// Weights with every shape required by `config`, all zero.
MhsWeights zero_weights(const MhsConfig& config);

/// Deterministic in (config, seed). Projections are Glorot uniform,
/// LayerNorm affine is (1, 0), ESF W starts at config.esf_w_init.
MhsWeights init_weights(const MhsConfig& config, std::uint64_t seed);

/// Throws ValidationError naming the first tensor whose presence or shape
/// disagrees with `config`.
void validate_weights(const MhsWeights& weights, const MhsConfig& config);

struct ParamBreakdown {
  std::size_t head_projection = 0;
  std::vector<std::size_t> head_ssm;  // per head
  std::size_t esf = 0;
  std::size_t layer_norm = 0;
  std::size_t tail = 0;
  std::size_t total = 0;
};

ParamBreakdown param_breakdown(const MhsConfig& config);
std::size_t param_count(const MhsConfig& config);

/// Intermediates of one forward call, retained for backward and diagnostics.
struct HeadTrace {
  Tensor projected;                             // x^h [B×S×L]
  std::vector<ScanRoute> routes;                // K
  std::vector<std::vector<MambaTrace>> mamba;   // [K][B]
  Tensor stack;                                 // [B×K×S×L], canonical order
  Tensor fused;                                 // [B×S×L]
};

struct ForwardTrace {
  GridShape grid;
  Tensor x;        // [B×C_l×L], channel-first input
  std::vector<HeadTrace> heads;
  Tensor concat;   // [B×n·S×L]
  Tensor normed;   // [B×n·S×L]
};

/// X[B×H×W×C_l] -> [B×H×W×C_l]: per head project, scan along K routes with
/// the head's block, re-lay each route into row-major order, fuse, then
/// concatenate, LayerNorm over channels and (optionally) project back.
Tensor forward(const Tensor& X, const MhsWeights& weights, const MhsConfig& config,
               ForwardTrace* trace = nullptr);

// Layout helpers between the external (B,H,W,C) and internal (B,C,L) views.
Tensor to_channel_first(const Tensor& X);
Tensor to_channel_last(const Tensor& y, GridShape grid);

}  // namespace mhs
