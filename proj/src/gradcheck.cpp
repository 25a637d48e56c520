#include "mhs/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>

#include "mhs/backward.hpp"
#include "mhs/mhs.hpp"
#include "mhs/rng.hpp"
#include "mhs/ssm.hpp"

namespace mhs {

Tensor numeric_jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h,
                        std::span<const std::size_t> coords) {
  if (!(h > 0.0)) throw ContractError("finite-difference step must be > 0");
  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.size());
    std::iota(all.begin(), all.end(), 0);
    coords = all;
  }
  Tensor probe = x;
  Tensor jac;
  for (std::size_t p = 0; p < coords.size(); ++p) {
    const std::size_t i = coords[p];
    if (i >= x.size()) throw DimensionError("probe coordinate out of range");
    probe[i] = x[i] + h;
    const Tensor up = f(probe);
    probe[i] = x[i] - h;
    const Tensor down = f(probe);
    probe[i] = x[i];
    if (!all_finite(up) || !all_finite(down)) throw DomainError("non-finite function value while probing");
    if (p == 0) jac = Tensor({coords.size(), up.size()});
    for (std::size_t m = 0; m < up.size(); ++m) jac(p, m) = (up[m] - down[m]) / (2.0 * h);
  }
  return jac;
}

std::vector<std::size_t> probe_coordinates(std::size_t n, std::size_t max_probes, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= max_probes) return idx;
  Rng rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < max_probes; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.next() % (n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(max_probes);
  std::sort(idx.begin(), idx.end());
  return idx;
}

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return std::fabs(analytic - numeric) / denom;
}

std::string_view grad_status_name(GradStatus s) noexcept {
  switch (s) {
    case GradStatus::Pass: return "pass";
    case GradStatus::Fail: return "fail";
    case GradStatus::Inconclusive: return "inconclusive";
  }
  return "unknown";
}

double GradReport::max_rel_err() const noexcept {
  double m = 0.0;
  for (const auto& p : params) m = std::max(m, p.max_rel_err);
  return m;
}

double GradReport::max_abs_err() const noexcept {
  double m = 0.0;
  for (const auto& p : params) m = std::max(m, p.max_abs_err);
  return m;
}

std::string GradReport::summary() const {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3);
  os << op << ": " << grad_status_name(status) << " max_rel=" << max_rel_err() << " tol=" << tol
     << " h=" << step << " params=" << params.size() << " draws=" << attempts;
  return os.str();
}

const std::vector<std::string>& gradcheck_ops() {
  static const std::vector<std::string> ops = {"recurrence", "selective_scan", "mamba_block",
                                               "esf_sum",    "esf_mixpool",    "esf_cv",
                                               "esf_mixpool_cv", "layer_norm", "forward"};
  return ops;
}

namespace {

constexpr double kKinkMargin = 1e-3;
constexpr std::size_t kMaxDraws = 10;

// A drawn problem: probe-able tensors, an evaluator reading their current
// values, and the analytic gradient of ⟨cotangent, eval()⟩ for each.
struct Problem {
  std::vector<std::pair<std::string, Tensor*>> params;
  std::function<Tensor()> eval;
  std::vector<Tensor> analytic;
  Tensor cotangent;
  std::shared_ptr<void> state;
};

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
  for (double& v : t.data()) v = rng.uniform(lo, hi);
}

// True when no position of the stack sits near a kink of `scheme`. Where a
// ReLU gate is closed (cv < t − margin) the fused value is locally zero, so
// min/max ties there are not kinks of the composite.
bool stack_is_regular(const Tensor& stack, const EsfScheme& scheme) {
  const std::size_t B = stack.extent(0), K = stack.extent(1), P = stack.extent(2) * stack.extent(3);
  if (K < 2) return true;
  const Tensor cv = scheme.uses_cv() ? coefficient_variation(stack, scheme.eps) : Tensor({1});
  const bool relu = scheme.uses_cv() && scheme.gate == GateKind::Relu;
  std::vector<double> vals(K);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t p = 0; p < P; ++p) {
      if (relu) {
        const double margin = cv[b * P + p] - scheme.t;
        if (std::fabs(margin) <= kKinkMargin) return false;
        if (margin < 0.0) continue;
      }
      for (std::size_t k = 0; k < K; ++k) vals[k] = stack[(b * K + k) * P + p];
      std::sort(vals.begin(), vals.end());
      if (scheme.uses_cv() && vals[1] - vals[0] <= kKinkMargin) return false;
      if (scheme.uses_pooling() && vals[K - 1] - vals[K - 2] <= kKinkMargin) return false;
    }
  return true;
}

void add_mamba_params(Problem& pr, MambaWeights& w, const MambaWeights& g, const std::string& prefix) {
  auto gn = g.named();
  auto wn = w.named();
  for (std::size_t i = 0; i < wn.size(); ++i) {
    pr.params.emplace_back(prefix + wn[i].first, wn[i].second);
    pr.analytic.push_back(*gn[i].second);
  }
}

// O(1)-scaled weights so every gradient path carries signal.
void randomize_mamba(MambaWeights& w, Rng& rng) {
  const double s_in = 1.0 / std::sqrt(static_cast<double>(w.model_dim()));
  const double s_inner = 1.0 / std::sqrt(static_cast<double>(w.inner_dim()));
  fill_uniform(w.w_in, rng, -s_in, s_in);
  fill_uniform(w.w_gate, rng, -s_in, s_in);
  if (w.has_conv()) fill_uniform(w.conv_w, rng, -0.8, 0.8);
  fill_uniform(w.w_delta, rng, -s_inner, s_inner);
  fill_uniform(w.b_delta, rng, -3.0, -1.0);
  fill_uniform(w.w_b, rng, -1.0, 1.0);
  fill_uniform(w.w_c, rng, -1.0, 1.0);
  fill_uniform(w.a, rng, -2.0, -0.3);
  fill_uniform(w.d_skip, rng, 0.5, 1.5);
  fill_uniform(w.w_out, rng, -s_inner, s_inner);
}

// Larger state contribution and longer memory (Δ ≈ 0.1..0.3, |A| ≤ 1).
void widen_state_path(MambaWeights& w, Rng& rng) {
  fill_uniform(w.w_in, rng, -1.5, 1.5);
  if (w.has_conv()) fill_uniform(w.conv_w, rng, -1.0, 1.0);
  fill_uniform(w.w_out, rng, -3.0, 3.0);
  fill_uniform(w.b_delta, rng, -2.25, -1.05);
  fill_uniform(w.a, rng, -1.0, -0.2);
  fill_uniform(w.w_b, rng, -3.0, 3.0);
  fill_uniform(w.w_c, rng, -3.0, 3.0);
}

std::optional<Problem> draw_recurrence(const GradDims& d, Rng& rng) {
  struct S {
    Tensor a, b, c, x;
  };
  auto st = std::make_shared<S>();
  st->a = rng.uniform_tensor({d.state}, -0.9, 0.9);
  st->b = rng.uniform_tensor({d.state}, -1.0, 1.0);
  st->c = rng.uniform_tensor({d.state}, -1.0, 1.0);
  st->x = rng.uniform_tensor({d.length}, -1.0, 1.0);
  Problem pr;
  pr.cotangent = rng.uniform_tensor({d.length}, -1.0, 1.0);
  pr.eval = [st] { return recurrence_scan(st->a, st->b, st->c, st->x); };
  RecurrenceGrads g = backward_recurrence(st->a, st->b, st->c, st->x, pr.cotangent);
  pr.params = {{"x", &st->x}, {"a_bar", &st->a}, {"b_bar", &st->b}, {"c", &st->c}};
  pr.analytic = {g.x, g.a_bar, g.b_bar, g.c};
  pr.state = st;
  return pr;
}

std::optional<Problem> draw_selective(const GradDims& d, Rng& rng) {
  struct S {
    Tensor u;
    MambaWeights w;
  };
  auto st = std::make_shared<S>();
  SsmOptions opt{d.state, d.inner, 1, false};
  st->w = zero_mamba_weights(1, opt);  // inner dim = d.inner
  randomize_mamba(st->w, rng);
  st->u = rng.uniform_tensor({d.length, d.inner}, -1.0, 1.0);
  Problem pr;
  pr.cotangent = rng.uniform_tensor({d.length, d.inner}, -1.0, 1.0);
  pr.eval = [st] { return selective_scan(st->u, st->w); };
  SelectiveTrace tr;
  selective_scan(st->u, st->w, &tr);
  MambaWeights g = st->w.zeros_like();
  Tensor du = backward_selective_scan(st->u, tr, st->w, pr.cotangent, g);
  pr.params = {{"u", &st->u},     {"w_delta", &st->w.w_delta}, {"b_delta", &st->w.b_delta},
               {"w_b", &st->w.w_b}, {"w_c", &st->w.w_c},       {"a", &st->w.a},
               {"d_skip", &st->w.d_skip}};
  pr.analytic = {du, g.w_delta, g.b_delta, g.w_b, g.w_c, g.a, g.d_skip};
  pr.state = st;
  return pr;
}

std::optional<Problem> draw_mamba(const GradDims& d, Rng& rng) {
  struct S {
    Tensor x;
    MambaWeights w;
  };
  auto st = std::make_shared<S>();
  st->w = zero_mamba_weights(d.subspace, SsmOptions{d.state, 2, 3, true});
  randomize_mamba(st->w, rng);
  widen_state_path(st->w, rng);
  st->x = rng.uniform_tensor({d.batch, d.subspace, d.length}, -1.0, 1.0);
  Problem pr;
  pr.cotangent = rng.uniform_tensor({d.batch, d.subspace, d.length}, -1.0, 1.0);
  pr.eval = [st] { return mamba_block(st->x, st->w); };
  std::vector<MambaTrace> traces;
  mamba_block(st->x, st->w, &traces);
  MambaWeights g = st->w.zeros_like();
  Tensor dx = backward_mamba_block(traces, st->w, pr.cotangent, g);
  pr.params = {{"x", &st->x}};
  pr.analytic = {dx};
  add_mamba_params(pr, st->w, g, "");
  pr.state = st;
  return pr;
}

std::optional<Problem> draw_esf(const GradDims& d, EsfKind kind, Rng& rng) {
  struct S {
    Tensor stack, w;
    EsfScheme scheme;
  };
  auto st = std::make_shared<S>();
  st->scheme.kind = kind;
  st->scheme.t = d.t;
  st->stack = rng.uniform_tensor({d.batch, d.routes, d.subspace, d.length}, -1.0, 1.0);
  st->w = rng.uniform_tensor({1, 2}, 0.2, 1.0);
  if (!stack_is_regular(st->stack, st->scheme)) return std::nullopt;
  Problem pr;
  pr.cotangent = rng.uniform_tensor({d.batch, d.subspace, d.length}, -1.0, 1.0);
  pr.eval = [st] { return fuse(st->stack, st->scheme, st->w); };
  EsfGrads g = backward_esf(st->scheme, st->stack, st->w, pr.cotangent);
  pr.params = {{"stack", &st->stack}};
  pr.analytic = {g.stack};
  if (st->scheme.uses_pooling()) {
    pr.params.emplace_back("w", &st->w);
    pr.analytic.push_back(g.w.reshaped({1, 2}));
  }
  pr.state = st;
  return pr;
}

std::optional<Problem> draw_layer_norm(const GradDims& d, Rng& rng) {
  struct S {
    Tensor x, gamma, beta;
  };
  auto st = std::make_shared<S>();
  st->x = rng.uniform_tensor({d.batch, d.channels, d.length}, -1.0, 1.0);
  st->gamma = rng.uniform_tensor({d.channels}, 0.5, 1.5);
  st->beta = rng.uniform_tensor({d.channels}, -0.5, 0.5);
  Problem pr;
  pr.cotangent = rng.uniform_tensor({d.batch, d.channels, d.length}, -1.0, 1.0);
  pr.eval = [st] { return layer_norm(st->x, 1, st->gamma, st->beta, 1e-5); };
  LayerNormGrads g = backward_layer_norm(st->x, 1, st->gamma, 1e-5, pr.cotangent);
  pr.params = {{"x", &st->x}, {"gamma", &st->gamma}, {"beta", &st->beta}};
  pr.analytic = {g.x, g.gamma, g.beta};
  pr.state = st;
  return pr;
}

std::optional<Problem> draw_forward(const GradDims& d, Rng& rng) {
  struct S {
    MhsConfig config;
    MhsWeights w;
    Tensor x;
  };
  auto st = std::make_shared<S>();
  MhsConfig& cfg = st->config;
  cfg.channels = d.channels;
  cfg.heads = d.heads;
  cfg.subspace = d.subspace;
  cfg.routes = d.routes;
  cfg.esf.kind = d.esf;
  cfg.esf.t = d.t;
  cfg.ssm = SsmOptions{d.state, 2, 3, true};
  cfg.tail_projection = true;
  st->w = zero_weights(cfg);
  const double s_c = 1.0 / std::sqrt(static_cast<double>(cfg.channels));
  const double s_cat = 1.0 / std::sqrt(static_cast<double>(cfg.concat_dim()));
  for (Tensor& p : st->w.head_proj) fill_uniform(p, rng, -2.0 * s_c, 2.0 * s_c);
  for (MambaWeights& m : st->w.mamba) {
    randomize_mamba(m, rng);
    widen_state_path(m, rng);
  }
  for (Tensor& ew : st->w.esf_w) fill_uniform(ew, rng, 0.2, 1.0);
  fill_uniform(st->w.ln_gamma, rng, 0.5, 1.5);
  fill_uniform(st->w.ln_beta, rng, -0.5, 0.5);
  fill_uniform(st->w.tail_proj, rng, -s_cat, s_cat);
  st->x = rng.uniform_tensor({d.batch, d.height, d.width, d.channels}, -1.0, 1.0);

  ForwardTrace trace;
  forward(st->x, st->w, cfg, &trace);
  for (const HeadTrace& ht : trace.heads)
    if (!stack_is_regular(ht.stack, cfg.esf)) return std::nullopt;

  Problem pr;
  pr.cotangent = rng.uniform_tensor({d.batch, d.height, d.width, d.channels}, -1.0, 1.0);
  pr.eval = [st] { return forward(st->x, st->w, st->config); };
  ForwardGrads g = backward_forward(trace, st->w, cfg, pr.cotangent);
  pr.params = {{"input", &st->x}};
  pr.analytic = {g.x};
  auto wn = st->w.named();
  auto gn = g.weights.named();
  for (std::size_t i = 0; i < wn.size(); ++i) {
    pr.params.push_back(wn[i]);
    pr.analytic.push_back(*gn[i].second);
  }
  pr.state = st;
  return pr;
}

std::optional<Problem> draw(std::string_view op, const GradDims& d, Rng& rng) {
  if (op == "recurrence") return draw_recurrence(d, rng);
  if (op == "selective_scan") return draw_selective(d, rng);
  if (op == "mamba_block") return draw_mamba(d, rng);
  if (op == "esf_sum") return draw_esf(d, EsfKind::Sum, rng);
  if (op == "esf_mixpool") return draw_esf(d, EsfKind::MixturePooling, rng);
  if (op == "esf_cv") return draw_esf(d, EsfKind::CvScaling, rng);
  if (op == "esf_mixpool_cv") return draw_esf(d, EsfKind::MixPoolCv, rng);
  if (op == "layer_norm") return draw_layer_norm(d, rng);
  if (op == "forward") return draw_forward(d, rng);
  throw ContractError("unknown gradcheck op '" + std::string(op) + "'");
}

}  // namespace

GradReport gradcheck_module(std::string_view op, const GradDims& dims, std::uint64_t seed, double h,
                            double tol) {
  GradReport report;
  report.op = std::string(op);
  report.step = h;
  report.tol = tol;

  std::optional<Problem> problem;
  for (std::size_t attempt = 0; attempt < kMaxDraws && !problem; ++attempt) {
    Rng rng(seed + 0x9E3779B97F4A7C15ull * attempt);
    report.attempts = attempt + 1;
    problem = draw(op, dims, rng);
  }
  if (!problem) {
    report.status = GradStatus::Inconclusive;
    return report;
  }

  Problem& pr = *problem;
  for (std::size_t i = 0; i < pr.params.size(); ++i) {
    Tensor* param = pr.params[i].second;
    const auto coords = probe_coordinates(param->size(), dims.max_probes, seed + 7919 * (i + 1));
    auto f = [&](const Tensor& v) {
      Tensor saved = *param;
      *param = v;
      Tensor y = pr.eval();
      *param = std::move(saved);
      return y;
    };
    const Tensor jac = numeric_jacobian(f, *param, h, coords);
    ParamGradError err{pr.params[i].first, 0.0, 0.0, coords.size()};
    for (std::size_t p = 0; p < coords.size(); ++p) {
      double numeric = 0.0;
      for (std::size_t m = 0; m < pr.cotangent.size(); ++m) numeric += jac(p, m) * pr.cotangent[m];
      const double analytic = pr.analytic[i][coords[p]];
      err.max_abs_err = std::max(err.max_abs_err, std::fabs(analytic - numeric));
      err.max_rel_err = std::max(err.max_rel_err, relative_error(analytic, numeric));
    }
    report.params.push_back(std::move(err));
  }
  report.status = report.max_rel_err() <= tol ? GradStatus::Pass : GradStatus::Fail;
  return report;
}

}  // namespace mhs
