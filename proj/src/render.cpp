#include "mhs/render.hpp"

#include <sstream>

namespace mhs {

std::string route_ascii(const ScanRoute& route) {
  const GridShape g = route.grid();
  const std::size_t width = std::to_string(route.length() - 1).size();
  std::ostringstream os;
  for (std::size_t r = 0; r < g.height; ++r) {
    for (std::size_t c = 0; c < g.width; ++c) {
      const std::string step = std::to_string(route.inv()[r * g.width + c]);
      if (c) os << ' ';
      os << std::string(width - step.size(), ' ') << step;
    }
    os << '\n';
  }
  return os.str();
}

std::string route_svg(const ScanRoute& route) {
  constexpr int kCell = 40;
  const GridShape g = route.grid();
  const std::size_t w = g.width * kCell, h = g.height * kCell;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
     << "\" viewBox=\"0 0 " << w << ' ' << h << "\">\n";
  os << "  <title>" << pattern_name(route.pattern()) << " variant " << route.variant() << ' ' << g.height
     << 'x' << g.width << "</title>\n";
  for (std::size_t r = 0; r < g.height; ++r)
    for (std::size_t c = 0; c < g.width; ++c)
      os << "  <rect x=\"" << c * kCell << "\" y=\"" << r * kCell << "\" width=\"" << kCell << "\" height=\""
         << kCell << "\" fill=\"none\" stroke=\"#bbbbbb\"/>\n";
  os << "  <polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"";
  for (std::size_t t = 0; t < route.length(); ++t) {
    const std::size_t cell = route.perm()[t];
    if (t) os << ' ';
    os << (cell % g.width) * kCell + kCell / 2 << ',' << (cell / g.width) * kCell + kCell / 2;
  }
  os << "\"/>\n";
  const std::size_t first = route.perm().front();
  os << "  <circle cx=\"" << (first % g.width) * kCell + kCell / 2 << "\" cy=\""
     << (first / g.width) * kCell + kCell / 2 << "\" r=\"4\" fill=\"#2ca02c\"/>\n";
  os << "</svg>\n";
  return os.str();
}

}  // namespace mhs
