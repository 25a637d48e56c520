#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mhs/scan_geometry.hpp"
#include "mhs/tensor.hpp"

namespace mhs {

enum class GatherStrategy { PerRouteCopy, FusedGather };

std::string_view strategy_name(GatherStrategy s) noexcept;
std::optional<GatherStrategy> parse_strategy(std::string_view name) noexcept;

struct BenchOptions {
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t channels = 32;  // S
  std::size_t reps = 5;
  ScanPattern pattern = ScanPattern::Spiral;
  std::uint64_t seed = 0;
};

struct BenchResult {
  std::string label;
  std::size_t height = 0, width = 0, channels = 0, reps = 0;
  double median_ms = 0.0, p10_ms = 0.0, p90_ms = 0.0;
  double elements_per_second = 0.0;
  std::string checksum;  // hex FNV-1a over the output bit patterns
};

/// Route workload over a [S×H×W] map: for each of the 4 routes, read the
/// sequence, apply a causal decay scan y_t = x_t + 0.5·y_{t−1}, lay it back
/// into row-major order and accumulate into one [S×L] map.
///
/// PerRouteCopy materialises each route's sequence with gather_sequence and
/// scatter_section; FusedGather reads all routes into one [S×K×L] buffer
/// through a combined index table and scatters straight into the
/// accumulator. Both accumulate routes in the same order, so outputs are
/// bitwise equal.
Tensor route_workload(const Tensor& map, const std::vector<ScanRoute>& routes, GatherStrategy strategy);

std::string checksum_hex(const Tensor& t);

/// Requires reps >= 3 (ContractError otherwise). Runs both strategies,
/// throws std::runtime_error if their checksums differ, then times the
/// requested ones.
std::vector<BenchResult> run_bench(const std::vector<GatherStrategy>& strategies, const BenchOptions& options);

}  // namespace mhs
