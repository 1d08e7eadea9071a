#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "hsiband/layers.h"

namespace hsiband {

// BFNN checkpoint, little-endian throughout:
//   "BFNN" | u8 version = 1 | 3 zero bytes | u32 record count
//   per record: u8 kind | u8 weight rank | u32 x rank | u8 bias rank | u32 x rank
//               | f32 weights | f32 biases
// Records appear in layer construction order. Layer names are not stored.
std::vector<unsigned char> encode_checkpoint(std::span<const LayerParams<float>> layers);
std::vector<LayerParams<float>> decode_checkpoint(std::span<const unsigned char> bytes);

void save_checkpoint(std::span<const LayerParams<float>> layers, const std::filesystem::path& path);
std::vector<LayerParams<float>> load_checkpoint(const std::filesystem::path& path);

}  // namespace hsiband
