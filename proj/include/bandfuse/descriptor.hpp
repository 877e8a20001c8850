#pragma once

#include "bandfuse/tensor.hpp"

#include <Eigen/Core>

#include <span>
#include <vector>

namespace bandfuse {

/// Pixel value that marks a padding band. Adding 0.5 in the band
/// multiplication stage turns it into exact zeros.
inline constexpr double kPaddingValue = -0.5;

/// Wavelength interval of one spectral band, in nanometres.
struct BandSpec {
  double lambda_min_nm = 0.0;
  double lambda_max_nm = 0.0;

  /// Both ends inside (300, 20000) nm and min <= max.
  void validate() const;
  bool operator==(const BandSpec&) const = default;
};

enum class EncodingVariant {
  /// lambda - 400 with D/2 frequencies shared by each sin/cos pair.
  SharedFrequency,
  /// log10(lambda - 300) - 2 with a separate denominator per index.
  LogStaggered,
};

enum class StatsVariant {
  FourSummary,    // min, max, mean, population std
  FivePercentile, // p1, p10, p50, p90, p99
};

int stats_width(StatsVariant variant);

struct DescriptorOptions {
  /// Total spectral-encoding width; each wavelength end gets half.
  int encoding_dims = 32;
  EncodingVariant encoding = EncodingVariant::SharedFrequency;
  StatsVariant stats = StatsVariant::FourSummary;

  int width() const { return encoding_dims + stats_width(stats); }
  void validate() const;
};

double normalize_wavelength(double lambda_nm, EncodingVariant variant);

/// Sinusoidal encoding of one wavelength into `dims` values (dims even).
Eigen::VectorXd spectral_encode(double lambda_nm, int dims, EncodingVariant variant);

/// Summary statistics of one band's pixels, computed in double precision.
template <typename T>
Eigen::VectorXd band_statistics(std::span<const T> pixels, StatsVariant variant);

/// [enc(lambda_min) | enc(lambda_max) | statistics].
template <typename T>
Eigen::VectorXd build_descriptor(const BandSpec& spec, std::span<const T> pixels,
                                 const DescriptorOptions& options = {});

template <typename T>
struct DescriptorBatch {
  Tensor<T> descriptors;     // [Bmax x width]
  std::vector<bool> validity;
  Index n_real = 0;
};

/// Descriptors for `bands` [Bmax x H x W] where the first `n_real` bands are
/// real (described by `specs`) and the rest are padding bands filled with
/// kPaddingValue. Padding rows are zero with validity false.
template <typename T>
DescriptorBatch<T> build_descriptor_batch(std::span<const BandSpec> specs, const Tensor<T>& bands,
                                          Index n_real, const DescriptorOptions& options = {});

}  // namespace bandfuse
