#pragma once

#include "bandfuse/sample.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace bandfuse {

/// Landsat 8 DN to top-of-atmosphere reflectance: DN * 2e-5 - 0.1.
double toa_landsat(std::int64_t dn);
/// Sentinel-2 L1C DN to top-of-atmosphere reflectance: DN / 10000.
double toa_sentinel(std::int64_t dn);

/// Splits a scene [B x Hs x Ws] into non-overlapping tile x tile crops in
/// row-major order; remainders are dropped. The mask, when present, is cut
/// the same way.
std::vector<TileSample> tile_scene(const TileSample& scene, Index tile = 512);

struct QuantizedInput {
  std::vector<std::uint8_t> codes;
  Tensor<float> values;  // codes / 255
};

/// round(clip(x * 255, 0, 255)) as u8, plus the back-mapped reals.
QuantizedInput quantize_input_u8(const Tensor<float>& x);

// MSTF: "MST1", u32 version=1, u32 H, W, B, B x (f32 lambda_min, f32
// lambda_max), then B*H*W f32 band-major reflectance. Little-endian.
void write_mstf(const std::filesystem::path& path, const TileSample& tile);
TileSample read_mstf(const std::filesystem::path& path);

// MSK: "MSK1", u32 H, W, then H*W u8 labels in {0, 1, 2, 255}.
void write_mask(const std::filesystem::path& path, const std::vector<Label>& labels, Index height, Index width);
std::vector<Label> read_mask(const std::filesystem::path& path, Index* height = nullptr, Index* width = nullptr);

/// Raw f32 little-endian dump of a tensor's values.
void write_raw_f32(const std::filesystem::path& path, const Tensor<float>& t);

/// Tile/mask pairs "<name>.mstf" + "<name>.msk" in `dir`, sorted by name.
std::vector<TileSample> read_dataset(const std::filesystem::path& dir);
void write_dataset(const std::filesystem::path& dir, const std::vector<TileSample>& tiles,
                   const std::string& prefix = "tile");

}  // namespace bandfuse
