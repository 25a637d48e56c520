#include "mhs/bench.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cstdio>
#include <stdexcept>

#include "mhs/rng.hpp"

namespace mhs {

std::string_view strategy_name(GatherStrategy s) noexcept {
  return s == GatherStrategy::PerRouteCopy ? "per-route-copy" : "fused-gather";
}

std::optional<GatherStrategy> parse_strategy(std::string_view name) noexcept {
  if (name == "per-route-copy") return GatherStrategy::PerRouteCopy;
  if (name == "fused-gather") return GatherStrategy::FusedGather;
  return std::nullopt;
}

namespace {

void decay_scan(double* seq, std::size_t L) {
  for (std::size_t t = 1; t < L; ++t) seq[t] += 0.5 * seq[t - 1];
}

}  // namespace

Tensor route_workload(const Tensor& map, const std::vector<ScanRoute>& routes, GatherStrategy strategy) {
  const std::size_t S = map.extent(1), L = map.extent(2) * map.extent(3), K = routes.size();
  Tensor acc({S, L});
  if (strategy == GatherStrategy::PerRouteCopy) {
    for (const ScanRoute& route : routes) {
      Tensor seq = gather_sequence(map, route);
      for (std::size_t s = 0; s < S; ++s) decay_scan(seq.data().data() + s * L, L);
      Tensor section = scatter_section(seq, route);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += section[i];
    }
    return acc;
  }

  std::vector<std::size_t> index(K * L);
  for (std::size_t k = 0; k < K; ++k) std::copy(routes[k].perm().begin(), routes[k].perm().end(), index.begin() + static_cast<long>(k * L));
  std::vector<double> buf(S * K * L);
  const double* src = map.data().data();
  for (std::size_t s = 0; s < S; ++s) {
    const double* row = src + s * L;
    double* dst = buf.data() + s * K * L;
    for (std::size_t i = 0; i < K * L; ++i) dst[i] = row[index[i]];
  }
  for (std::size_t s = 0; s < S; ++s) {
    double* out = acc.data().data() + s * L;
    for (std::size_t k = 0; k < K; ++k) {
      double* seq = buf.data() + (s * K + k) * L;
      decay_scan(seq, L);
      const std::size_t* perm = index.data() + k * L;
      for (std::size_t t = 0; t < L; ++t) out[perm[t]] += seq[t];
    }
  }
  return acc;
}

std::string checksum_hex(const Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (double v : t.data()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xffu;
      h *= 0x100000001b3ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<BenchResult> run_bench(const std::vector<GatherStrategy>& strategies, const BenchOptions& o) {
  if (o.reps < 3) throw ContractError("bench needs reps >= 3, got " + std::to_string(o.reps));
  const GridShape grid{o.height, o.width};
  Rng rng(o.seed);
  const Tensor map = rng.uniform_tensor({1, o.channels, o.height, o.width}, -1.0, 1.0);
  std::vector<ScanRoute> routes;
  for (std::size_t v = 0; v < kRouteVariants; ++v) routes.push_back(build_route(o.pattern, v, grid));

  const std::string ref = checksum_hex(route_workload(map, routes, GatherStrategy::PerRouteCopy));
  const std::string fused = checksum_hex(route_workload(map, routes, GatherStrategy::FusedGather));
  if (ref != fused) {
    throw std::runtime_error("strategy checksums differ: per-route-copy " + ref + " vs fused-gather " + fused);
  }

  std::vector<BenchResult> results;
  for (GatherStrategy s : strategies) {
    std::vector<double> ms;
    std::string sum;
    for (std::size_t r = 0; r < o.reps; ++r) {
      const auto t0 = std::chrono::steady_clock::now();
      Tensor out = route_workload(map, routes, s);
      const auto t1 = std::chrono::steady_clock::now();
      ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      sum = checksum_hex(out);
    }
    if (sum != ref) throw std::runtime_error("checksum drifted during timing for " + std::string(strategy_name(s)));
    std::sort(ms.begin(), ms.end());
    auto pct = [&](double q) { return ms[static_cast<std::size_t>(q * static_cast<double>(ms.size() - 1) + 0.5)]; };
    BenchResult b;
    b.label = std::string(strategy_name(s));
    b.height = o.height;
    b.width = o.width;
    b.channels = o.channels;
    b.reps = o.reps;
    b.median_ms = pct(0.5);
    b.p10_ms = pct(0.1);
    b.p90_ms = pct(0.9);
    // Each route reads and writes every element once.
    const double elements = 2.0 * static_cast<double>(routes.size() * o.channels * grid.cells());
    b.elements_per_second = elements / (std::max(b.median_ms, 1e-6) / 1e3);
    b.checksum = sum;
    results.push_back(b);
  }
  return results;
}

}  // namespace mhs
