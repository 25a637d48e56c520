#pragma once

#include <string>

#include "mhs/scan_geometry.hpp"

namespace mhs {

/// Grid of visit step numbers, right-aligned, one grid row per line.
std::string route_ascii(const ScanRoute& route);

/// Polyline through the visited cell centres. Fixed precision and attribute
/// order, so output is byte-stable.
std::string route_svg(const ScanRoute& route);

}  // namespace mhs
