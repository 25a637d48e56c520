#include "mhs/scan_geometry.hpp"

#include <algorithm>
#include <cstdlib>
#include <sstream>

namespace mhs {

std::string_view pattern_name(ScanPattern p) noexcept {
  switch (p) {
    case ScanPattern::Raster: return "raster";
    case ScanPattern::Snake: return "snake";
    case ScanPattern::Diagonal: return "diagonal";
    case ScanPattern::Spiral: return "spiral";
  }
  return "unknown";
}

std::optional<ScanPattern> parse_pattern(std::string_view name) noexcept {
  for (ScanPattern p : kAllPatterns)
    if (pattern_name(p) == name) return p;
  return std::nullopt;
}

namespace {

using Cells = std::vector<std::size_t>;

Cells raster(GridShape g) {
  Cells out(g.cells());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

Cells snake(GridShape g) {
  Cells out;
  out.reserve(g.cells());
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t k = 0; k < g.width; ++k) {
      const std::size_t c = (r % 2 == 0) ? k : g.width - 1 - k;
      out.push_back(r * g.width + c);
    }
  }
  return out;
}

// Anti-diagonals r + c = d; even d walks down-left to up-right reversed, i.e.
// row ascending, odd d row descending, so each diagonal starts next to where
// the previous one ended.
Cells diagonal(GridShape g) {
  Cells out;
  out.reserve(g.cells());
  const std::size_t last = g.height + g.width - 2;
  for (std::size_t d = 0; d <= last; ++d) {
    const std::size_t r_lo = d >= g.width ? d - (g.width - 1) : 0;
    const std::size_t r_hi = std::min(d, g.height - 1);
    if (d % 2 == 0) {
      for (std::size_t r = r_lo; r <= r_hi; ++r) out.push_back(r * g.width + (d - r));
    } else {
      for (std::size_t r = r_hi + 1; r-- > r_lo;) out.push_back(r * g.width + (d - r));
    }
  }
  return out;
}

// Clockwise inward peel starting along the top edge.
Cells spiral(GridShape g) {
  Cells out;
  out.reserve(g.cells());
  long top = 0, left = 0;
  long bottom = static_cast<long>(g.height) - 1, right = static_cast<long>(g.width) - 1;
  const long w = static_cast<long>(g.width);
  while (top <= bottom && left <= right) {
    for (long c = left; c <= right; ++c) out.push_back(static_cast<std::size_t>(top * w + c));
    for (long r = top + 1; r <= bottom; ++r) out.push_back(static_cast<std::size_t>(r * w + right));
    if (top < bottom) {
      for (long c = right - 1; c >= left; --c)
        out.push_back(static_cast<std::size_t>(bottom * w + c));
    }
    if (left < right) {
      for (long r = bottom - 1; r > top; --r) out.push_back(static_cast<std::size_t>(r * w + left));
    }
    ++top, ++left, --bottom, --right;
  }
  return out;
}

std::size_t reflect(std::size_t cell, std::size_t variant, GridShape g) {
  std::size_t r = cell / g.width, c = cell % g.width;
  if (variant & 1u) c = g.width - 1 - c;
  if (variant & 2u) r = g.height - 1 - r;
  return r * g.width + c;
}

void check_grid(const Tensor& t, std::size_t L, const char* what) {
  if (t.rank() != 3 && t.rank() != 4) {
    throw DimensionError(std::string(what) + " expects B×S×L or B×S×H×W, got " +
                         shape_str(t.shape()));
  }
  const std::size_t cells = t.rank() == 4 ? t.extent(2) * t.extent(3) : t.extent(2);
  if (cells != L) {
    throw DimensionError(std::string(what) + ": tensor " + shape_str(t.shape()) +
                         " does not match route length " + std::to_string(L));
  }
}

}  // namespace

ScanRoute::ScanRoute(ScanPattern pattern, std::size_t variant, GridShape grid,
                     std::vector<std::size_t> perm)
    : pattern_(pattern), variant_(variant), grid_(grid), perm_(std::move(perm)) {
  if (grid_.height == 0 || grid_.width == 0) throw DimensionError("grid extents must be >= 1");
  if (variant_ >= kRouteVariants) {
    throw ContractError("route variant must be in [0, 4), got " + std::to_string(variant_));
  }
  if (perm_.size() != grid_.cells()) throw DimensionError("route length does not match grid");
  inv_ = invert_permutation(perm_);
}

ScanRoute build_route(ScanPattern pattern, std::size_t variant, GridShape grid) {
  if (grid.height == 0 || grid.width == 0) throw DimensionError("grid extents must be >= 1");
  if (variant >= kRouteVariants) {
    throw ContractError("route variant must be in [0, 4), got " + std::to_string(variant));
  }
  Cells base;
  switch (pattern) {
    case ScanPattern::Raster: base = raster(grid); break;
    case ScanPattern::Snake: base = snake(grid); break;
    case ScanPattern::Diagonal: base = diagonal(grid); break;
    case ScanPattern::Spiral: base = spiral(grid); break;
  }
  for (std::size_t& cell : base) cell = reflect(cell, variant, grid);
  return ScanRoute(pattern, variant, grid, std::move(base));
}

std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm) {
  const std::size_t n = perm.size();
  std::vector<std::size_t> inv(n, n);
  for (std::size_t t = 0; t < n; ++t) {
    if (perm[t] >= n || inv[perm[t]] != n) throw ContractError("not a permutation");
    inv[perm[t]] = t;
  }
  return inv;
}

std::vector<std::size_t> invert(const ScanRoute& route) { return invert_permutation(route.perm()); }

Tensor gather_sequence(const Tensor& map, const ScanRoute& route) {
  const std::size_t L = route.length();
  check_grid(map, L, "gather_sequence");
  if (map.rank() == 4 && (map.extent(2) != route.grid().height || map.extent(3) != route.grid().width)) {
    throw DimensionError("gather_sequence: map " + shape_str(map.shape()) + " does not match grid " +
                         std::to_string(route.grid().height) + "x" + std::to_string(route.grid().width));
  }
  const std::size_t rows = map.extent(0) * map.extent(1);
  Tensor out({map.extent(0), map.extent(1), L});
  const auto& perm = route.perm();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = map.data().data() + r * L;
    double* dst = out.data().data() + r * L;
    for (std::size_t t = 0; t < L; ++t) dst[t] = src[perm[t]];
  }
  return out;
}

Tensor scatter_section(const Tensor& seq, const ScanRoute& route) {
  const std::size_t L = route.length();
  if (seq.rank() != 3) {
    throw DimensionError("scatter_section expects B×S×L, got " + shape_str(seq.shape()));
  }
  check_grid(seq, L, "scatter_section");
  const std::size_t rows = seq.extent(0) * seq.extent(1);
  Tensor out(seq.shape());
  const auto& perm = route.perm();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = seq.data().data() + r * L;
    double* dst = out.data().data() + r * L;
    for (std::size_t t = 0; t < L; ++t) dst[perm[t]] = src[t];
  }
  return out;
}

std::vector<AdjacencyViolation> adjacency_report(const ScanRoute& route) {
  std::vector<AdjacencyViolation> out;
  const auto& perm = route.perm();
  const std::size_t w = route.grid().width;
  for (std::size_t t = 0; t + 1 < perm.size(); ++t) {
    const long dr = std::labs(static_cast<long>(perm[t] / w) - static_cast<long>(perm[t + 1] / w));
    const long dc = std::labs(static_cast<long>(perm[t] % w) - static_cast<long>(perm[t + 1] % w));
    const long dist = route.pattern() == ScanPattern::Diagonal ? std::max(dr, dc) : dr + dc;
    if (dist != 1) out.push_back({t, perm[t], perm[t + 1], static_cast<std::size_t>(dist)});
  }
  return out;
}

std::string route_dump(const ScanRoute& route) {
  std::ostringstream os;
  os << pattern_name(route.pattern()) << ' ' << route.variant() << ' ' << route.grid().height << ' '
     << route.grid().width << '\n';
  for (std::size_t t = 0; t < route.length(); ++t) os << (t ? " " : "") << route.perm()[t];
  os << '\n';
  return os.str();
}

}  // namespace mhs
