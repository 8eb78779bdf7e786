#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "evonas/format_error.hpp"
#include "evonas/network.hpp"

namespace evonas {

inline constexpr std::uint32_t kModelVersion = 1;

enum class LayerTag : std::uint8_t { conv = 1, pool = 2, relu = 3, flatten = 4, dense = 5 };

// Little-endian: "MNDL", version u32, layer count u32, input c/h/w u32; per
// layer a tag u8 and its hyperparameter u32s (conv: in, out, k, s; pool:
// size, stride; dense: in, out), then each parameter tensor as rank u32,
// dims u32 x rank, f32 data. Conv weights are rank 4, dense weights rank 2,
// biases rank 1.
std::vector<std::uint8_t> encode_model(const Network<float>& network);
Network<float> decode_model(std::span<const std::uint8_t> bytes);

void save_model(const Network<float>& network, const std::filesystem::path& path);
Network<float> load_model(const std::filesystem::path& path);

}  // namespace evonas
