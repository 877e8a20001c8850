#pragma once

#include "bandfuse/descriptor.hpp"
#include "bandfuse/ops.hpp"
#include "bandfuse/tensor.hpp"

#include <optional>
#include <vector>

namespace bandfuse {

/// Class codes used throughout training and evaluation.
enum class CloudClass : Label { Clear = 0, ThickCloud = 1, ThinCloud = 2 };

/// One tile: reflectance bands [B x H x W], their wavelength intervals and
/// an optional label mask (0 clear, 1 thick, 2 thin, 255 ignore).
struct TileSample {
  Tensor<float> bands;
  std::vector<BandSpec> specs;
  std::optional<std::vector<Label>> mask;

  Index band_count() const { return bands.dim(0); }
  Index height() const { return bands.dim(1); }
  Index width() const { return bands.dim(2); }
  /// Checks len(specs) == B, spec validity, and mask dims and values.
  void validate() const;
  /// Keeps the listed bands (and their specs) in the given order.
  TileSample select_bands(const std::vector<Index>& indices) const;
};

}  // namespace bandfuse
