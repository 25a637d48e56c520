#include "mhs/mhs.hpp"

#include <cmath>
#include <sstream>

#include "mhs/parallel.hpp"
#include "mhs/rng.hpp"

namespace mhs {

void MhsConfig::validate() const {
  std::vector<std::string> problems;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  need(channels >= 1, "c_l must be >= 1");
  need(heads >= 1, "n_heads must be >= 1");
  need(subspace >= 1, "subspace_dim must be >= 1");
  need(routes >= 1 && routes <= kRouteVariants, "k_routes must be in [1, 4]");
  need(patterns.empty() || patterns.size() == heads,
       "patterns must list one pattern per head (" + std::to_string(heads) + "), got " +
           std::to_string(patterns.size()));
  need(tail_projection || heads * subspace == channels,
       "tail_projection=false requires n_heads*subspace_dim == c_l (" + std::to_string(heads) + "*" +
           std::to_string(subspace) + " != " + std::to_string(channels) + ")");
  need(esf.t >= 0.0, "esf.t must be >= 0");
  need(esf.eps > 0.0, "esf.eps must be > 0");
  need(!esf.uses_cv() || routes >= 2, "esf.scheme " + std::string(esf_kind_name(esf.kind)) +
                                          " needs k_routes >= 2");
  need(ssm.state_dim >= 1, "ssm.state_dim must be >= 1");
  need(ssm.expansion >= 1, "ssm.expansion must be >= 1");
  need(!ssm.conv_on || ssm.conv_width >= 1, "ssm.conv_width must be >= 1 when ssm.conv_on");
  need(ln_eps > 0.0, "layer norm eps must be > 0");
  if (!problems.empty()) {
    std::ostringstream os;
    os << "invalid config:";
    for (const auto& p : problems) os << "\n  - " << p;
    throw ValidationError(os.str());
  }
}

std::vector<ScanPattern> MhsConfig::head_patterns() const {
  if (!patterns.empty()) return patterns;
  if (heads == 4) return {kAllPatterns.begin(), kAllPatterns.end()};
  static constexpr std::array<ScanPattern, 4> cycle = {ScanPattern::Snake, ScanPattern::Diagonal,
                                                       ScanPattern::Spiral, ScanPattern::Raster};
  std::vector<ScanPattern> out(heads);
  for (std::size_t h = 0; h < heads; ++h) out[h] = cycle[h % cycle.size()];
  return out;
}

// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, Tensor*>> MhsWeights::named() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (std::size_t h = 0; h < head_proj.size(); ++h) {
    const std::string prefix = "head." + std::to_string(h) + ".";
    out.emplace_back(prefix + "proj", &head_proj[h]);
    if (h < mamba.size()) {
      for (auto& [name, t] : mamba[h].named()) out.emplace_back(prefix + "mamba." + name, t);
    }
    if (h < esf_w.size()) out.emplace_back(prefix + "esf_w", &esf_w[h]);
  }
  out.emplace_back("ln.gamma", &ln_gamma);
  out.emplace_back("ln.beta", &ln_beta);
  if (!tail_proj.empty()) out.emplace_back("tail.proj", &tail_proj);
  return out;
}

std::vector<std::pair<std::string, const Tensor*>> MhsWeights::named() const {
  std::vector<std::pair<std::string, const Tensor*>> out;
  for (auto& [name, t] : const_cast<MhsWeights*>(this)->named()) out.emplace_back(name, t);
  return out;
}

MhsWeights MhsWeights::zeros_like() const {
  MhsWeights z = *this;
  for (auto& [name, t] : z.named()) t->fill(0.0);
  return z;
}

bool MhsWeights::bit_equal(const MhsWeights& other) const {
  const auto a = named();
  const auto b = other.named();
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].first != b[i].first || !a[i].second->bit_equal(*b[i].second)) return false;
  }
  return true;
}

MhsWeights zero_weights(const MhsConfig& config) {
  config.validate();
  const std::size_t n = config.heads, S = config.subspace, C = config.channels;
  MhsWeights w;
  for (std::size_t h = 0; h < n; ++h) {
    w.head_proj.emplace_back(Shape{S, C});
    w.mamba.push_back(zero_mamba_weights(S, config.ssm));
    if (config.esf.uses_pooling()) w.esf_w.emplace_back(Shape{1, 2});
  }
  w.ln_gamma = Tensor({n * S});
  w.ln_beta = Tensor({n * S});
  if (config.tail_projection) w.tail_proj = Tensor({C, n * S});
  return w;
}

MhsWeights init_weights(const MhsConfig& config, std::uint64_t seed) {
  MhsWeights w = zero_weights(config);
  Rng rng(seed);
  auto glorot = [&](Tensor& t) {
    const double bound = std::sqrt(6.0 / static_cast<double>(t.extent(0) + t.extent(1)));
    for (double& v : t.data()) v = rng.uniform(-bound, bound);
  };
  for (std::size_t h = 0; h < config.heads; ++h) {
    glorot(w.head_proj[h]);
    w.mamba[h] = init_mamba_weights(config.subspace, config.ssm, rng);
  }
  for (Tensor& ew : w.esf_w) {
    ew[0] = config.esf_w_init[0];
    ew[1] = config.esf_w_init[1];
  }
  w.ln_gamma.fill(1.0);
  if (!w.tail_proj.empty()) glorot(w.tail_proj);
  return w;
}

void validate_weights(const MhsWeights& weights, const MhsConfig& config) {
  const MhsWeights expected = zero_weights(config);
  const auto want = expected.named();
  const auto have = weights.named();
  if (weights.head_proj.size() != config.heads || weights.mamba.size() != config.heads) {
    throw ValidationError("weights hold " + std::to_string(weights.head_proj.size()) +
                          " heads, config expects " + std::to_string(config.heads));
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (i >= have.size() || have[i].first != want[i].first) {
      throw ValidationError("tensor " + want[i].first + " is missing from weights");
    }
    if (have[i].second->shape() != want[i].second->shape()) {
      throw ValidationError("tensor " + want[i].first + " has shape " +
                            shape_str(have[i].second->shape()) + ", config expects " +
                            shape_str(want[i].second->shape()));
    }
  }
  if (have.size() != want.size()) {
    throw ValidationError("tensor " + have[want.size()].first + " is not expected by config");
  }
}

ParamBreakdown param_breakdown(const MhsConfig& config) {
  config.validate();
  const std::size_t n = config.heads, S = config.subspace, C = config.channels;
  ParamBreakdown p;
  p.head_projection = n * S * C;
  p.head_ssm.assign(n, mamba_param_count(S, config.ssm));
  p.esf = config.esf.uses_pooling() ? 2 * n : 0;
  p.layer_norm = 2 * n * S;
  p.tail = config.tail_projection ? C * n * S : 0;
  p.total = p.head_projection + p.esf + p.layer_norm + p.tail;
  for (std::size_t c : p.head_ssm) p.total += c;
  return p;
}

std::size_t param_count(const MhsConfig& config) { return param_breakdown(config).total; }

// ---------------------------------------------------------------------------

Tensor to_channel_first(const Tensor& X) {
  if (X.rank() != 4) throw DimensionError("expected B×H×W×C, got " + shape_str(X.shape()));
  const std::size_t B = X.extent(0), L = X.extent(1) * X.extent(2), C = X.extent(3);
  Tensor out({B, C, L});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t c = 0; c < C; ++c) out[(b * C + c) * L + l] = X[(b * L + l) * C + c];
  return out;
}

Tensor to_channel_last(const Tensor& y, GridShape grid) {
  if (y.rank() != 3 || y.extent(2) != grid.cells()) {
    throw DimensionError("expected B×C×L with L=" + std::to_string(grid.cells()) + ", got " +
                         shape_str(y.shape()));
  }
  const std::size_t B = y.extent(0), C = y.extent(1), L = y.extent(2);
  Tensor out({B, grid.height, grid.width, C});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t c = 0; c < C; ++c) out[(b * L + l) * C + c] = y[(b * C + c) * L + l];
  return out;
}

namespace {

// out[b, s, l] = Σ_c W[s, c] x[b, c, l], summed in c order.
Tensor project_channels(const Tensor& W, const Tensor& x) {
  const std::size_t B = x.extent(0), C = x.extent(1), L = x.extent(2), S = W.extent(0);
  Tensor out({B, S, L});
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t s = 0; s < S; ++s) {
      double* dst = out.data().data() + (b * S + s) * L;
      for (std::size_t c = 0; c < C; ++c) {
        const double w = W(s, c);
        const double* src = x.data().data() + (b * C + c) * L;
        for (std::size_t l = 0; l < L; ++l) dst[l] += w * src[l];
      }
    }
  }
  return out;
}

}  // namespace

Tensor forward(const Tensor& X, const MhsWeights& weights, const MhsConfig& config, ForwardTrace* trace) {
  config.validate();
  validate_weights(weights, config);
  if (X.rank() != 4 || X.extent(3) != config.channels) {
    throw DimensionError("forward expects B×H×W×" + std::to_string(config.channels) + ", got " +
                         shape_str(X.shape()));
  }
  if (!all_finite(X)) throw DomainError("forward input contains non-finite values");

  const GridShape grid{X.extent(1), X.extent(2)};
  const std::size_t B = X.extent(0), L = grid.cells();
  const std::size_t n = config.heads, S = config.subspace, K = config.routes;
  const auto patterns = config.head_patterns();

  Tensor x = to_channel_first(X);
  std::vector<HeadTrace> heads(n);
  parallel_for(n, [&](std::size_t h) {
    heads[h].projected = project_channels(weights.head_proj[h], x);
    heads[h].stack = Tensor({B, K, S, L});
    heads[h].mamba.resize(K);
    for (std::size_t j = 0; j < K; ++j) heads[h].routes.push_back(build_route(patterns[h], j, grid));
  });

  // Every (head, route) pair writes its own slot of its head's stack.
  parallel_for(n * K, [&](std::size_t unit) {
    const std::size_t h = unit / K, j = unit % K;
    HeadTrace& ht = heads[h];
    const ScanRoute& route = ht.routes[j];
    Tensor seq = gather_sequence(ht.projected, route);
    Tensor out = mamba_block(seq, weights.mamba[h], trace ? &ht.mamba[j] : nullptr);
    Tensor section = scatter_section(out, route);
    for (std::size_t b = 0; b < B; ++b) {
      std::copy_n(section.data().begin() + static_cast<long>(b * S * L), S * L,
                  ht.stack.data().begin() + static_cast<long>((b * K + j) * S * L));
    }
  });

  static const Tensor kNoW({2});
  parallel_for(n, [&](std::size_t h) {
    const Tensor& w = config.esf.uses_pooling() ? weights.esf_w[h] : kNoW;
    heads[h].fused = fuse(heads[h].stack, config.esf, w);
  });

  Tensor concat({B, n * S, L});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t h = 0; h < n; ++h)
      std::copy_n(heads[h].fused.data().begin() + static_cast<long>(b * S * L), S * L,
                  concat.data().begin() + static_cast<long>((b * n + h) * S * L));

  Tensor normed = layer_norm(concat, 1, weights.ln_gamma, weights.ln_beta, config.ln_eps);
  Tensor y = config.tail_projection ? project_channels(weights.tail_proj, normed) : normed;
  Tensor out = to_channel_last(y, grid);

  if (trace) {
    trace->grid = grid;
    trace->x = std::move(x);
    trace->heads = std::move(heads);
    trace->concat = std::move(concat);
    trace->normed = std::move(normed);
  }
  return out;
}

}  // namespace mhs
