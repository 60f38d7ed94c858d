#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dsbf/networks.hpp"

namespace dsbf {

// Binary checkpoint layout (all integers little-endian):
//   magic "DSBFCKPT" | u32 version | u64 x 6 model dims
//   | u64 g layer count | u64 b layer count
//   | u32 total layer count, then per layer: u8 activation, u64 in, u64 out,
//     in*out f64 weights (row-major), out f64 biases
//   | f64 alpha
// Layers are written in the order g..., b..., c, v..., a_q..., a_k..., a_v...
// Doubles are stored as their IEEE-754 bit patterns, so a round trip is exact.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_model(const ModelBundle& model);
ModelBundle deserialize_model(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelBundle& model);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace dsbf
