#pragma once

#include "bandfuse/sample.hpp"

#include <cstdint>
#include <vector>

namespace bandfuse {

/// Procedural multispectral tiles with clear / thin / thick cloud labels.
/// A smoothed random field decides the cloud class and opacity; each band
/// mixes a wavelength-dependent surface with bright cloud reflectance.
struct SyntheticOptions {
  Index size = 64;
  /// Gaussian smoothing radius (pixels) of the cloud field.
  double cloud_sigma = 5.0;
  double surface_sigma = 2.5;
  /// Cloud field thresholds in standard deviations.
  double thin_threshold = 0.0;
  double thick_threshold = 0.7;
  double noise = 0.01;
  std::uint64_t seed = 7;
};

/// Five bands at coastal, blue, green, red and NIR wavelengths.
std::vector<BandSpec> landsat_like_specs();

TileSample make_synthetic_tile(const SyntheticOptions& options, std::uint64_t index);
std::vector<TileSample> make_synthetic_dataset(const SyntheticOptions& options, std::size_t count,
                                               std::uint64_t first_index = 0);

}  // namespace bandfuse
