#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedq/nn/tensor.hpp"

namespace fedq::nn {

// Parameter file layout (little-endian):
//   "FQS1", u32 entry count, then per entry
//   u32 name length, UTF-8 name, u32 rank, rank x u32 dims,
//   product(dims) x float32 values.
// Values are narrowed to float32; loading widens them back exactly.
std::vector<std::uint8_t> encode_parameters(const ParameterSet& params);
ParameterSet decode_parameters(std::span<const std::uint8_t> bytes);

void save_parameters(const ParameterSet& params, const std::filesystem::path& path);
ParameterSet load_parameters(const std::filesystem::path& path);

// Rounds every value to the nearest float32, as a file round-trip would.
ParameterSet round_to_float32(const ParameterSet& params);

}  // namespace fedq::nn
