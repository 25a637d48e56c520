#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mhs/mhs.hpp"

namespace mhs {

// Config files are UTF-8 JSON:
//
//   { "c_l": 96, "n_heads": 3, "subspace_dim": 32, "k_routes": 4,
//     "patterns": ["snake", "diagonal", "spiral"],
//     "esf": {"scheme": "cv", "t": 0.5, "eps": 1e-6, "w": [0.5, 0.5]},
//     "tail_projection": true,
//     "ssm": {"state_dim": 16, "expansion": 2, "conv_width": 3, "conv_on": true},
//     "seed": 0 }
//
// Missing keys take the MhsConfig defaults. `esf.gate` ("relu" | "sigmoid")
// is an optional extension.

MhsConfig config_from_json_text(const std::string& text);
MhsConfig load_config(const std::filesystem::path& path);
std::string config_to_json_text(const MhsConfig& config);

// Weights container, little-endian:
//
//   bytes 0-3    magic "MHSW"
//   bytes 4-7    version, u32 = 1
//   bytes 8-15   manifest length in bytes, u64
//   manifest     UTF-8 JSON array of {"name", "shape", "dtype": "f32"|"f64"}
//   payloads     raw IEEE-754 tensors in manifest order, no padding

enum class StorageType { F32, F64 };

inline constexpr std::uint32_t kWeightsVersion = 1;

std::vector<std::uint8_t> encode_weights(const MhsWeights& weights, StorageType storage = StorageType::F64);
/// Throws FormatError (with the failing byte offset); never returns partial weights.
MhsWeights decode_weights(const std::vector<std::uint8_t>& bytes);

void save_weights(const MhsWeights& weights, const std::filesystem::path& path,
                  StorageType storage = StorageType::F64);
MhsWeights load_weights(const std::filesystem::path& path);
/// load_weights followed by validate_weights against `config`.
MhsWeights load_weights(const std::filesystem::path& path, const MhsConfig& config);

}  // namespace mhs
