#include "mhs/checks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

#include "mhs/backward.hpp"
#include "mhs/esf.hpp"
#include "mhs/gradcheck.hpp"
#include "mhs/rng.hpp"
#include "mhs/scan_geometry.hpp"
#include "mhs/ssm.hpp"

namespace mhs {

std::optional<CheckScope> parse_check_scope(std::string_view name) noexcept {
  if (name == "routes") return CheckScope::Routes;
  if (name == "ssm") return CheckScope::Ssm;
  if (name == "esf") return CheckScope::Esf;
  if (name == "grads") return CheckScope::Grads;
  if (name == "all") return CheckScope::All;
  return std::nullopt;
}

namespace {

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

CheckResult make(std::string name, bool passed, std::string detail) {
  return {std::move(name), passed, std::move(detail)};
}

// Routes -------------------------------------------------------------------

template <typename F>
void for_each_route(F&& f) {
  for (ScanPattern p : kAllPatterns)
    for (std::size_t v = 0; v < kRouteVariants; ++v)
      for (std::size_t h = 1; h <= 8; ++h)
        for (std::size_t w = 1; w <= 8; ++w) f(build_route(p, v, GridShape{h, w}));
}

std::string route_id(const ScanRoute& r) {
  return std::string(pattern_name(r.pattern())) + " v" + std::to_string(r.variant()) + " " +
         std::to_string(r.grid().height) + "x" + std::to_string(r.grid().width);
}

void route_checks(std::vector<CheckResult>& out) {
  std::size_t count = 0;
  std::string bad_bij, bad_inv, bad_adj, bad_sym, bad_trip;
  for_each_route([&](const ScanRoute& r) {
    ++count;
    const std::size_t L = r.length();
    std::vector<std::size_t> sorted = r.perm();
    std::sort(sorted.begin(), sorted.end());
    std::vector<std::size_t> iota(L);
    std::iota(iota.begin(), iota.end(), std::size_t{0});
    if (sorted != iota && bad_bij.empty()) bad_bij = route_id(r);
    for (std::size_t t = 0; t < L; ++t)
      if (r.inv()[r.perm()[t]] != t && bad_inv.empty()) bad_inv = route_id(r);

    if (r.pattern() != ScanPattern::Raster && !adjacency_report(r).empty() && bad_adj.empty()) bad_adj = route_id(r);

    const ScanRoute base = build_route(r.pattern(), 0, r.grid());
    const std::size_t H = r.grid().height, W = r.grid().width;
    for (std::size_t t = 0; t < L; ++t) {
      std::size_t row = base.perm()[t] / W, col = base.perm()[t] % W;
      if (r.variant() & 1u) col = W - 1 - col;
      if (r.variant() & 2u) row = H - 1 - row;
      if (r.perm()[t] != row * W + col && bad_sym.empty()) {
        bad_sym = route_id(r);
        break;
      }
    }

    Rng rng(count);
    const Tensor map = rng.uniform_tensor({2, 3, H, W}, -1.0, 1.0);
    if (!scatter_section(gather_sequence(map, r), r).bit_equal(map.reshaped({2, 3, L})) && bad_trip.empty())
      bad_trip = route_id(r);
  });
  const std::string scope = std::to_string(count) + " routes, grids 1..8 x 1..8";
  auto add = [&](const char* name, const std::string& bad) {
    out.push_back(make(name, bad.empty(), bad.empty() ? scope : "first failure " + bad));
  };
  add("routes.bijection", bad_bij);
  add("routes.inverse", bad_inv);
  add("routes.adjacency", bad_adj);
  add("routes.variant_symmetry", bad_sym);
  add("routes.gather_scatter_roundtrip", bad_trip);

  const ScanRoute spiral = build_route(ScanPattern::Spiral, 0, GridShape{3, 3});
  const std::string dump = route_dump(spiral);
  const bool ok = dump == "spiral 0 3 3\n0 1 2 5 8 7 6 3 4\n";
  out.push_back(make("routes.spiral_3x3_golden", ok, ok ? "0 1 2 5 8 7 6 3 4" : "got " + dump));

  const auto raster_report = adjacency_report(build_route(ScanPattern::Raster, 0, GridShape{2, 2}));
  const bool raster_ok = raster_report.size() == 1 && raster_report[0].step == 1;
  out.push_back(make("routes.raster_wrap_reported", raster_ok,
                     std::to_string(raster_report.size()) + " violation(s) on 2x2"));
}

// SSM ----------------------------------------------------------------------

double rel_linf(const Tensor& a, const Tensor& b) {
  return max_abs_diff(a, b) / std::max(max_abs(b), 1e-300);
}

void ssm_checks(std::vector<CheckResult>& out) {
  {
    Rng rng(101);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t N = 1 + rng.next() % 8, L = 1 + rng.next() % 64;
      Tensor a_bar = rng.uniform_tensor({N}, -0.99, 0.99);
      Tensor b_bar = rng.uniform_tensor({N}, -1.0, 1.0);
      Tensor c = rng.uniform_tensor({N}, -1.0, 1.0);
      Tensor x = rng.uniform_tensor({L}, -1.0, 1.0);
      const Tensor rec = recurrence_scan(a_bar, b_bar, c, x);
      const Tensor conv = conv_scan(x, conv_kernel(a_bar, b_bar, c, L));
      worst = std::max(worst, rel_linf(conv, rec));
    }
    out.push_back(make("ssm.recurrence_conv_duality", worst <= 1e-10,
                       "100 trials N<=8 L<=64, max rel err " + fmt("%.3e", worst) + " <= 1e-10"));
  }
  {
    const Discretized d = discretize(Tensor::scalar(std::log(2.0)), Tensor::scalar(1.0), Tensor::scalar(0.7));
    const double err = std::max(std::fabs(d.a_bar[0] - 2.0), std::fabs(d.b_bar[0] - 0.7));
    out.push_back(make("ssm.zoh_closed_form", err <= 1e-12, "A=1 dt=ln2, err " + fmt("%.3e", err)));
  }
  {
    Rng rng(202);
    bool ok = true;
    double worst_ratio = 0.0;
    for (double delta : {1e-3, 1e-4, 1e-5}) {
      for (int trial = 0; trial < 20; ++trial) {
        const double a = -rng.uniform(0.1, 16.0), b = rng.uniform(-2.0, 2.0);
        const Discretized d = discretize(Tensor::scalar(delta), Tensor::scalar(a), Tensor::scalar(b));
        const double gap = std::fabs(d.b_bar[0] - delta * b), bound = std::fabs(a) * delta * delta * std::fabs(b);
        ok = ok && gap <= bound;
        if (bound > 0.0) worst_ratio = std::max(worst_ratio, gap / bound);
      }
    }
    out.push_back(make("ssm.zoh_small_step_bound", ok, "max gap/bound " + fmt("%.3f", worst_ratio)));
  }
  {
    double jump = 0.0;
    for (double s : {1.0, -1.0}) {
      const double at = s * kZohSeriesThreshold;
      jump = std::max(jump, std::fabs(zoh_phi(at) - zoh_phi(std::nextafter(at, 0.0))));
    }
    out.push_back(make("ssm.zoh_series_continuity", jump <= 1e-12, "jump " + fmt("%.3e", jump) + " at |z|=1e-4"));
  }
  {
    Rng rng(303);
    bool ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t N = 4, L = 16;
      Tensor a_bar = rng.uniform_tensor({L, N}, 0.1, 0.95);
      Tensor b_bar = rng.uniform_tensor({L, N}, -1.0, 1.0);
      Tensor c = rng.uniform_tensor({L, N}, -1.0, 1.0);
      Tensor x = rng.uniform_tensor({L}, -1.0, 1.0);
      const Tensor y = recurrence_scan(a_bar, b_bar, c, x);
      const std::size_t t = 1 + rng.next() % (L - 1);
      x[t] += 0.5;
      const Tensor y2 = recurrence_scan(a_bar, b_bar, c, x);
      for (std::size_t s = 0; s < t; ++s) ok = ok && y[s] == y2[s];
      ok = ok && y[t] != y2[t];
    }
    out.push_back(make("ssm.causality", ok, "20 perturbations, earlier outputs bit-identical"));
  }
  {
    Rng rng(404);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t N = 6, L = 32;
      Tensor a_bar = rng.uniform_tensor({N}, -0.9, 0.9);
      Tensor b_bar = rng.uniform_tensor({N}, -1.0, 1.0);
      Tensor c = rng.uniform_tensor({N}, -1.0, 1.0);
      Tensor x1 = rng.uniform_tensor({L}, -1.0, 1.0), x2 = rng.uniform_tensor({L}, -1.0, 1.0);
      const double alpha = rng.uniform(-2.0, 2.0), beta = rng.uniform(-2.0, 2.0);
      Tensor mix({L});
      for (std::size_t i = 0; i < L; ++i) mix[i] = alpha * x1[i] + beta * x2[i];
      const Tensor lhs = recurrence_scan(a_bar, b_bar, c, mix);
      const Tensor y1 = recurrence_scan(a_bar, b_bar, c, x1), y2 = recurrence_scan(a_bar, b_bar, c, x2);
      Tensor rhs({L});
      for (std::size_t i = 0; i < L; ++i) rhs[i] = alpha * y1[i] + beta * y2[i];
      worst = std::max(worst, max_abs_diff(lhs, rhs));
    }
    out.push_back(make("ssm.linearity", worst <= 1e-12, "max abs err " + fmt("%.3e", worst)));
  }
  {
    Rng rng(505);
    const std::size_t L = 12, D = 3, N = 4;
    const Tensor A = rng.uniform_tensor({D, N}, -4.0, -0.5);
    const Tensor b_row = rng.uniform_tensor({N}, -1.0, 1.0), c_row = rng.uniform_tensor({N}, -1.0, 1.0);
    const Tensor dt = rng.uniform_tensor({D}, 0.01, 0.2);
    Tensor delta({L, D}), B({L, N}), C({L, N});
    for (std::size_t t = 0; t < L; ++t) {
      for (std::size_t d = 0; d < D; ++d) delta(t, d) = dt[d];
      for (std::size_t n = 0; n < N; ++n) {
        B(t, n) = b_row[n];
        C(t, n) = c_row[n];
      }
    }
    const Tensor u = rng.uniform_tensor({L, D}, -1.0, 1.0);
    const Tensor y = selective_scan_core(u, delta, A, B, C, Tensor({D}, 0.0));
    double worst = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      Tensor a_row({N}), x({L});
      for (std::size_t n = 0; n < N; ++n) a_row[n] = A(d, n);
      for (std::size_t t = 0; t < L; ++t) x[t] = u(t, d);
      const Discretized z = discretize(Tensor::scalar(dt[d]), a_row, b_row);
      const Tensor ref = recurrence_scan(z.a_bar, z.b_bar, c_row, x);
      for (std::size_t t = 0; t < L; ++t) worst = std::max(worst, std::fabs(y(t, d) - ref[t]));
    }
    out.push_back(make("ssm.frozen_selective_matches_recurrence", worst <= 1e-12, "max abs err " + fmt("%.3e", worst)));
  }
}

// ESF ----------------------------------------------------------------------

Tensor stack_of(std::size_t K, std::size_t S, std::size_t L, Rng& rng) {
  return rng.uniform_tensor({1, K, S, L}, -1.0, 1.0);
}

Tensor permute_sections(const Tensor& stack, const std::vector<std::size_t>& order) {
  const std::size_t B = stack.extent(0), K = stack.extent(1), block = stack.size() / (B * K);
  Tensor out(stack.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t k = 0; k < K; ++k)
      std::copy_n(stack.data().begin() + static_cast<long>((b * K + order[k]) * block), block,
                  out.data().begin() + static_cast<long>((b * K + k) * block));
  return out;
}

void esf_checks(std::vector<CheckResult>& out) {
  const Tensor w_half({2}, std::vector<double>{0.5, 0.5});
  {
    Rng rng(606);
    const Tensor section = rng.uniform_tensor({1, 1, 3, 5}, -2.0, 2.0);
    Tensor stack({1, 4, 3, 5});
    for (std::size_t k = 0; k < 4; ++k)
      std::copy(section.data().begin(), section.data().end(), stack.data().begin() + static_cast<long>(k * 15));
    const Tensor z3 = fuse_cv_scale(stack, 0.5, 1e-6), z4 = fuse_mixpool_cv(stack, w_half, 0.5, 1e-6);
    const bool ok = max_abs(z3) == 0.0 && max_abs(z4) == 0.0;
    out.push_back(make("esf.identical_sections_gated_to_zero", ok, "t=0.5, max|z3|,|z4| = 0"));
  }
  {
    const Tensor probe({1, 4, 1, 1}, std::vector<double>{0.0, 0.0, 0.0, 1.0});
    const double cv = coefficient_variation(probe, 1e-6)[0];
    const double z3 = fuse_cv_scale(probe, 0.5, 1e-6)[0];
    const double err = std::max(std::fabs(cv - std::sqrt(3.0)), std::fabs(z3 - (std::sqrt(3.0) - 0.5)));
    out.push_back(make("esf.cv_probe_0001", err <= 1e-5, "cv " + fmt("%.9f", cv) + ", z3 " + fmt("%.9f", z3)));
  }
  {
    Rng rng(707);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const Tensor s = stack_of(4, 3, 6, rng);
      const Tensor base = coefficient_variation(s, 1e-6);
      const double shift = rng.uniform(-5.0, 5.0), gain = rng.uniform(0.5, 4.0);
      Tensor shifted(s.shape()), scaled(s.shape());
      for (std::size_t i = 0; i < s.size(); ++i) {
        shifted[i] = s[i] + shift;
        scaled[i] = s[i] * gain;
      }
      // Scaling by c moves eps to eps/c in the unscaled frame.
      const Tensor base_scaled = coefficient_variation(s, 1e-6 / gain);
      const Tensor a = coefficient_variation(shifted, 1e-6), b = coefficient_variation(scaled, 1e-6);
      for (std::size_t i = 0; i < base.size(); ++i) {
        worst = std::max(worst, std::fabs(a[i] - base[i]) / std::max(std::fabs(base[i]), 1e-12));
        worst = std::max(worst, std::fabs(b[i] - base_scaled[i]) / std::max(std::fabs(base_scaled[i]), 1e-12));
      }
    }
    out.push_back(make("esf.cv_shift_scale_invariance", worst <= 1e-6, "max rel err " + fmt("%.3e", worst)));
  }
  {
    Rng rng(808);
    double worst = 0.0;
    const std::vector<std::size_t> order{2, 0, 3, 1};
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor s = stack_of(4, 3, 6, rng), p = permute_sections(s, order);
      for (EsfKind kind : {EsfKind::Sum, EsfKind::MixturePooling, EsfKind::CvScaling, EsfKind::MixPoolCv}) {
        EsfScheme scheme;
        scheme.kind = kind;
        scheme.t = 0.2;
        worst = std::max(worst, max_abs_diff(fuse(s, scheme, w_half), fuse(p, scheme, w_half)));
      }
    }
    out.push_back(make("esf.section_permutation_invariance", worst <= 1e-12, "max abs err " + fmt("%.3e", worst)));
  }
  {
    Rng rng(909);
    const Tensor s = stack_of(4, 3, 6, rng);
    const Tensor mean_only = fuse_mixpool(s, Tensor({2}, std::vector<double>{1.0, 0.0}));
    const bool ok = fuse_sum(s).bit_equal(scale(mean_only, 4.0));
    const Tensor z4 = fuse_mixpool_cv(s, Tensor({2}, std::vector<double>{4.0, 0.0}), 0.2, 1e-6);
    const bool ok2 = z4.bit_equal(fuse_cv_scale(s, 0.2, 1e-6));
    out.push_back(make("esf.sum_equals_k_mean", ok && ok2, "K=4, bitwise for z1 and z3/z4"));
  }
  {
    const Tensor s({1, 2, 1, 1}, std::vector<double>{1.0, 3.0});
    const double z4 = fuse_mixpool_cv(s, w_half, 0.0, 1e-6)[0];
    const double expect = 2.5 / (1.0 + 1e-6);
    out.push_back(make("esf.mixpool_cv_hand_case", std::fabs(z4 - expect) <= 1e-12, "z4 " + fmt("%.12f", z4)));
  }
}

// Gradients ------------------------------------------------------------------

void grad_checks(std::vector<CheckResult>& out) {
  for (const std::string& op : gradcheck_ops()) {
    GradDims dims;
    if (op == "esf_cv") {
      dims.subspace = 3;
      dims.length = 6;
    }
    const double tol = op == "forward" ? 1e-4 : 1e-5;
    const GradReport report = gradcheck_module(op, dims, 2024, 1e-5, tol);
    out.push_back(make("grads." + op, report.passed(), report.summary()));
  }
  {
    Rng rng(111);
    const Tensor s = stack_of(4, 3, 6, rng);
    const Tensor w({2}, std::vector<double>{0.7, 0.3});
    EsfScheme scheme;
    scheme.kind = EsfKind::MixPoolCv;
    scheme.t = 0.2;
    const Tensor dz = rng.uniform_tensor({1, 3, 6}, -1.0, 1.0);
    const EsfGrads g = backward_esf(scheme, s, w, dz);
    const EsfGrads g3 = backward_esf(scheme, s, w, scale(dz, 3.0));
    const EsfGrads g0 = backward_esf(scheme, s, w, Tensor(dz.shape()));
    const double lin = max_abs_diff(scale(g.stack, 3.0), g3.stack) / std::max(max_abs(g3.stack), 1e-300);
    const bool zero = max_abs(g0.stack) == 0.0 && max_abs(g0.w) == 0.0;
    out.push_back(make("grads.adjoint_linearity", lin <= 1e-15, "rel err " + fmt("%.3e", lin)));
    out.push_back(make("grads.zero_cotangent", zero, "zero in, zero out"));
  }
}

}  // namespace

std::vector<CheckResult> run_checks(CheckScope scope) {
  std::vector<CheckResult> out;
  const bool all = scope == CheckScope::All;
  if (all || scope == CheckScope::Routes) route_checks(out);
  if (all || scope == CheckScope::Ssm) ssm_checks(out);
  if (all || scope == CheckScope::Esf) esf_checks(out);
  if (all || scope == CheckScope::Grads) grad_checks(out);
  return out;
}

bool print_checks(const std::vector<CheckResult>& results, std::ostream& out) {
  std::size_t failed = 0;
  for (const CheckResult& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    if (!r.passed) ++failed;
  }
  out << (failed == 0 ? "OK " : "FAILED ") << (results.size() - failed) << "/" << results.size() << " properties\n";
  return failed == 0;
}

}  // namespace mhs
