#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mhs/tensor.hpp"

namespace mhs {

struct GridShape {
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t cells() const noexcept { return height * width; }
  bool operator==(const GridShape&) const = default;
};

enum class ScanPattern { Raster, Snake, Diagonal, Spiral };

inline constexpr std::array<ScanPattern, 4> kAllPatterns = {
    ScanPattern::Raster, ScanPattern::Snake, ScanPattern::Diagonal, ScanPattern::Spiral};

/// Routes per pattern: one per starting corner.
inline constexpr std::size_t kRouteVariants = 4;

std::string_view pattern_name(ScanPattern p) noexcept;
std::optional<ScanPattern> parse_pattern(std::string_view name) noexcept;

/// A bijective visit order over an H×W grid.
///
/// `perm[t]` is the row-major cell index visited at step t and
/// `inv[perm[t]] == t`. Variant 0 starts top-left; variants 1, 2, 3 are the
/// variant-0 walk reflected horizontally, vertically, and both, so they start
/// top-right, bottom-left and bottom-right.
class ScanRoute {
 public:
  ScanRoute(ScanPattern pattern, std::size_t variant, GridShape grid, std::vector<std::size_t> perm);

  ScanPattern pattern() const noexcept { return pattern_; }
  std::size_t variant() const noexcept { return variant_; }
  const GridShape& grid() const noexcept { return grid_; }
  std::size_t length() const noexcept { return perm_.size(); }
  const std::vector<std::size_t>& perm() const noexcept { return perm_; }
  const std::vector<std::size_t>& inv() const noexcept { return inv_; }

 private:
  ScanPattern pattern_;
  std::size_t variant_;
  GridShape grid_;
  std::vector<std::size_t> perm_;
  std::vector<std::size_t> inv_;
};

ScanRoute build_route(ScanPattern pattern, std::size_t variant, GridShape grid);

/// Inverse permutation: inv[perm[t]] = t.
std::vector<std::size_t> invert(const ScanRoute& route);
std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm);

/// map[B×S×H×W] (or B×S×L with L = H·W) read along the route into B×S×L.
Tensor gather_sequence(const Tensor& map, const ScanRoute& route);

/// seq[B×S×L] in visit order laid back into row-major cell order.
Tensor scatter_section(const Tensor& seq, const ScanRoute& route);

struct AdjacencyViolation {
  std::size_t step;  // pair (step, step + 1)
  std::size_t from_cell;
  std::size_t to_cell;
  std::size_t distance;
};

/// Consecutive pairs that break the pattern's adjacency rule: Manhattan 1
/// for Snake/Spiral, Chebyshev 1 for Diagonal. Raster is checked against
/// Manhattan 1 too, so its row wraps show up as violations.
std::vector<AdjacencyViolation> adjacency_report(const ScanRoute& route);

/// `pattern variant H W` then the perm as space-separated integers.
std::string route_dump(const ScanRoute& route);

}  // namespace mhs
