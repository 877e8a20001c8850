#pragma once

#include "bandfuse/encoder.hpp"
#include "bandfuse/segnet.hpp"

#include <filesystem>

namespace bandfuse {

// SGN1 layout (little-endian):
//   "SGN1", u32 version = 1,
//   u32 in_channels, base_channels, n_stages, n_classes, quantized,
//   u32 tensor count, then per tensor: u32 rank, rank x u32 dims, f32 values
//   (conv weight then bias, in layer-plan order),
//   if quantized: u32 L, L x f32 weight scales, (L-1) x f32 activation scales.
void save_segnet(const std::filesystem::path& path, const SegNetParams<float>& params, const SegNetConfig& config);
void load_segnet(const std::filesystem::path& path, SegNetParams<float>& params, SegNetConfig& config);

// ENC1 layout (little-endian):
//   "ENC1", u32 version = 1,
//   u32 encoding_dims, encoding variant, stats variant, d_token, n_layers,
//   n_heads, d_ffn, c_out, padding level, output block,
//   u32 n_expand + widths, u32 n_contract + widths,
//   then tensors as in SGN1 (EncoderParams::parameters order).
void save_encoder(const std::filesystem::path& path, const EncoderParams<float>& params, const EncoderConfig& config);
void load_encoder(const std::filesystem::path& path, EncoderParams<float>& params, EncoderConfig& config);

}  // namespace bandfuse
