// One line per acceptance criterion; exit status is nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "cli_runner.hpp"
#include "mhs/bench.hpp"
#include "mhs/esf.hpp"
#include "mhs/gradcheck.hpp"
#include "mhs/io.hpp"
#include "mhs/mhs.hpp"
#include "mhs/rng.hpp"
#include "mhs/scan_geometry.hpp"
#include "mhs/ssm.hpp"

using namespace mhs;

namespace {

struct Outcome {
  bool ok;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Outcome route_correctness() {
  std::size_t routes = 0;
  for (ScanPattern p : kAllPatterns)
    for (std::size_t v = 0; v < kRouteVariants; ++v)
      for (std::size_t h = 1; h <= 8; ++h)
        for (std::size_t w = 1; w <= 8; ++w) {
          const ScanRoute r = build_route(p, v, GridShape{h, w});
          ++routes;
          std::vector<std::size_t> sorted = r.perm();
          std::sort(sorted.begin(), sorted.end());
          for (std::size_t t = 0; t < sorted.size(); ++t)
            if (sorted[t] != t || r.inv()[r.perm()[t]] != t) return {false, "not a bijection: " + route_dump(r)};
          for (std::size_t t = 0; t + 1 < r.length(); ++t) {
            const long r0 = static_cast<long>(r.perm()[t] / w), c0 = static_cast<long>(r.perm()[t] % w);
            const long r1 = static_cast<long>(r.perm()[t + 1] / w), c1 = static_cast<long>(r.perm()[t + 1] % w);
            const long dr = std::labs(r1 - r0), dc = std::labs(c1 - c0);
            if ((p == ScanPattern::Snake || p == ScanPattern::Spiral) && dr + dc != 1)
              return {false, "Manhattan step != 1: " + route_dump(r)};
            if (p == ScanPattern::Diagonal && std::max(dr, dc) != 1)
              return {false, "Chebyshev step != 1: " + route_dump(r)};
          }
        }
  return {true, std::to_string(routes) + " routes bijective, inverse exact, adjacency holds"};
}

Outcome duality() {
  Rng rng(2);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t N = 1 + rng.next() % 8, L = 1 + rng.next() % 64;
    const Tensor a = rng.uniform_tensor({N}, -0.99, 0.99), b = rng.uniform_tensor({N}, -1, 1),
                 c = rng.uniform_tensor({N}, -1, 1), x = rng.uniform_tensor({L}, -1, 1);
    const Tensor rec = recurrence_scan(a, b, c, x), conv = conv_scan(x, conv_kernel(a, b, c, L));
    worst = std::max(worst, max_abs_diff(rec, conv) / std::max(max_abs(rec), 1e-300));
  }
  return {worst <= 1e-10, "100 trials, max relative L-inf error " + fmt("%.3e", worst)};
}

Outcome zoh() {
  const Discretized d = discretize(Tensor::scalar(std::log(2.0)), Tensor::scalar(1.0), Tensor::scalar(1.0));
  const double closed = std::max(std::fabs(d.a_bar[0] - 2.0), std::fabs(d.b_bar[0] - 1.0));
  Rng rng(3);
  bool bound_ok = true;
  for (int i = 0; i < 100; ++i) {
    const double a = rng.uniform(-10, 10), b = rng.uniform(-3, 3), delta = 1e-4;
    const Discretized s = discretize(Tensor::scalar(delta), Tensor::scalar(a), Tensor::scalar(b));
    bound_ok = bound_ok && std::fabs(s.b_bar[0] - delta * b) <= std::fabs(a) * delta * delta * std::fabs(b);
  }
  double jump = 0.0;
  for (double z : {kZohSeriesThreshold, -kZohSeriesThreshold})
    jump = std::max(jump, std::fabs(zoh_phi(z) - zoh_phi(std::nextafter(z, 0.0))));
  const bool ok = closed <= 1e-12 && bound_ok && jump <= 1e-12;
  return {ok, "closed form err " + fmt("%.1e", closed) + ", small-step bound " + (bound_ok ? "holds" : "violated") +
                  ", threshold jump " + fmt("%.1e", jump)};
}

Outcome esf_semantics() {
  Rng rng(4);
  const Tensor section = rng.uniform_tensor({1, 1, 3, 5}, -1, 1);
  Tensor same({1, 4, 3, 5});
  for (std::size_t k = 0; k < 4; ++k)
    std::copy(section.data().begin(), section.data().end(), same.data().begin() + static_cast<long>(k * 15));
  const Tensor w({2}, std::vector<double>{0.5, 0.5});
  const bool zeros = max_abs(fuse_cv_scale(same, 0.5, 1e-6)) == 0.0 && max_abs(fuse_mixpool_cv(same, w, 0.5, 1e-6)) == 0.0;

  const Tensor probe({1, 4, 1, 1}, std::vector<double>{0, 0, 0, 1});
  const double cv = coefficient_variation(probe, 1e-6)[0], z3 = fuse_cv_scale(probe, 0.5, 1e-6)[0];
  const bool probe_ok = std::fabs(cv - std::sqrt(3.0)) <= 1e-5 && std::fabs(z3 - (std::sqrt(3.0) - 0.5)) <= 1e-5;

  const Tensor s = rng.uniform_tensor({1, 4, 3, 5}, -1, 1);
  const Tensor base = coefficient_variation(s, 1e-6);
  const Tensor shifted = coefficient_variation(elementwise(s, Tensor::scalar(2.0), BinaryOp::Add), 1e-6);
  const Tensor scaled = coefficient_variation(scale(s, 3.0), 1e-6);
  const Tensor scaled_ref = coefficient_variation(s, 1e-6 / 3.0);
  double inv = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    inv = std::max(inv, std::fabs(shifted[i] - base[i]) / base[i]);
    inv = std::max(inv, std::fabs(scaled[i] - scaled_ref[i]) / scaled_ref[i]);
  }
  return {zeros && probe_ok && inv <= 1e-6, std::string("identical->0 ") + (zeros ? "exact" : "NOT exact") +
                                                 ", cv " + fmt("%.7f", cv) + ", z3 " + fmt("%.7f", z3) +
                                                 ", invariance err " + fmt("%.1e", inv)};
}

Outcome gradients() {
  double iso = 0.0, full = 0.0;
  for (const std::string& op : gradcheck_ops()) {
    GradDims d;
    const bool fwd = op == "forward";
    const GradReport r = gradcheck_module(op, d, 5, 1e-5, fwd ? 1e-4 : 1e-5);
    if (!r.passed()) return {false, r.summary()};
    (fwd ? full : iso) = std::max(fwd ? full : iso, r.max_rel_err());
  }
  return {true, "isolated ops max rel " + fmt("%.2e", iso) + " <= 1e-5, forward " + fmt("%.2e", full) + " <= 1e-4"};
}

MhsConfig module_config(std::size_t n, std::size_t s, bool tail) {
  MhsConfig c;
  c.channels = 96;
  c.heads = n;
  c.subspace = s;
  c.tail_projection = tail;
  return c;
}

Outcome shape_contract() {
  Rng rng(6);
  const Tensor x = rng.uniform_tensor({1, 8, 8, 96}, -1, 1);
  const std::vector<MhsConfig> configs = {module_config(3, 32, true), module_config(4, 24, true),
                                          module_config(4, 32, true), module_config(3, 32, false),
                                          module_config(4, 24, false)};
  for (const MhsConfig& c : configs)
    if (forward(x, init_weights(c, 1), c).shape() != x.shape()) return {false, "shape changed"};
  bool rejected = false;
  try {
    module_config(4, 32, false).validate();
  } catch (const ValidationError&) {
    rejected = true;
  }
  return {rejected, "5 configs keep (1,8,8,96); tail-off with n*S != C_l " + std::string(rejected ? "rejected" : "accepted")};
}

Outcome param_direction() {
  const std::size_t base = param_count(module_config(3, 32, true));
  const std::size_t more_heads = param_count(module_config(4, 24, true));
  const std::size_t wider = param_count(module_config(4, 32, true));
  const std::size_t tail_off = param_count(module_config(3, 32, false));
  const bool ok = more_heads < base && wider > base && base - tail_off == 96 * 96;
  return {ok, "n4S24=" + std::to_string(more_heads) + " < n3S32=" + std::to_string(base) + " < n4S32=" +
                  std::to_string(wider) + ", tail delta " + std::to_string(base - tail_off)};
}

Outcome determinism() {
  const std::vector<std::string> commands = {"demo --seed 7 --height 6 --width 5 --batch 2", "check all"};
  for (const std::string& cmd : commands) {
    const CliRun first = run_cli(cmd);
    if (first.code != 0) return {false, "`" + cmd + "` exited " + std::to_string(first.code)};
    const std::string ref = mask_timing(first.out);
    for (const std::string& extra : {"", " --threads 1", " --threads 2", " --threads 4"}) {
      const CliRun again = run_cli(cmd + extra);
      if (mask_timing(again.out) != ref) return {false, "`" + cmd + extra + "` output differs"};
    }
  }
  return {true, "demo and check all byte-identical over repeat runs and 1/2/4 threads"};
}

Outcome bench_checksums() {
  BenchOptions o;
  o.height = 64;
  o.width = 64;
  o.channels = 32;
  o.reps = 3;
  const auto r = run_bench({GatherStrategy::PerRouteCopy, GatherStrategy::FusedGather}, o);
  const bool ok = r.size() == 2 && r[0].checksum == r[1].checksum && r[0].elements_per_second > 0 &&
                  r[1].elements_per_second > 0;
  return {ok, "64x64 S=32 checksums " + r[0].checksum + " / " + r[1].checksum};
}

Outcome weights_round_trip() {
  MhsConfig c = module_config(3, 32, true);
  c.esf.kind = EsfKind::MixPoolCv;
  const MhsWeights w = init_weights(c, 9);
  const auto bytes = encode_weights(w);
  const bool round = decode_weights(bytes).bit_equal(w);
  auto rejects = [](std::vector<std::uint8_t> b) {
    MhsWeights out;
    try {
      out = decode_weights(b);
    } catch (const FormatError&) {
      return out.head_proj.empty();
    }
    return false;
  };
  auto magic = bytes;
  magic[1] = 'X';
  const bool bad_magic = rejects(magic);
  const bool truncated = rejects({bytes.begin(), bytes.end() - 1}) && rejects({bytes.begin(), bytes.begin() + 12});
  return {round && bad_magic && truncated, std::string("round trip ") + (round ? "bitwise" : "differs") +
                                               ", corrupt magic " + (bad_magic ? "rejected" : "accepted") +
                                               ", truncation " + (truncated ? "rejected" : "accepted")};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> run;
    double budget_s;
  };
  const std::vector<Criterion> criteria = {
      {"route correctness", route_correctness, 5.0},
      {"recurrence/convolution duality", duality, 5.0},
      {"ZOH discretization", zoh, 0.0},
      {"ESF semantics", esf_semantics, 0.0},
      {"gradient certification", gradients, 60.0},
      {"shape and ablation contract", shape_contract, 0.0},
      {"parameter-count direction", param_direction, 0.0},
      {"determinism", determinism, 0.0},
      {"benchmark correctness", bench_checksums, 0.0},
      {"weights round trip", weights_round_trip, 0.0},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (criteria[i].budget_s > 0.0 && secs >= criteria[i].budget_s) {
      o.ok = false;
      o.detail += " (over " + fmt("%.0f", criteria[i].budget_s) + " s budget)";
    }
    if (!o.ok) ++failed;
    std::printf("%s %2zu %s: %s [%.2f s]\n", o.ok ? "PASS" : "FAIL", i + 1, criteria[i].name, o.detail.c_str(), secs);
  }
  std::printf("%s: %zu/%zu criteria\n", failed == 0 ? "ACCEPTED" : "REJECTED", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
