#include "bandfuse/descriptor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace bandfuse {

void BandSpec::validate() const {
  auto in_window = [](double nm) { return nm > 300.0 && nm < 20000.0; };
  if (!in_window(lambda_min_nm) || !in_window(lambda_max_nm)) {
    throw std::invalid_argument("BandSpec: wavelengths must lie in (300, 20000) nm, got [" +
                                std::to_string(lambda_min_nm) + ", " + std::to_string(lambda_max_nm) + "]");
  }
  if (lambda_min_nm > lambda_max_nm) throw std::invalid_argument("BandSpec: lambda_min exceeds lambda_max");
}

int stats_width(StatsVariant variant) {
  return variant == StatsVariant::FourSummary ? 4 : 5;
}

void DescriptorOptions::validate() const {
  if (encoding_dims < 4 || encoding_dims % 4 != 0) {
    throw std::invalid_argument("DescriptorOptions: encoding_dims must be a positive multiple of 4");
  }
}

double normalize_wavelength(double lambda_nm, EncodingVariant variant) {
  switch (variant) {
    case EncodingVariant::SharedFrequency:
      if (!(lambda_nm > 0.0)) throw std::invalid_argument("normalize_wavelength: wavelength must be positive");
      return lambda_nm - 400.0;
    case EncodingVariant::LogStaggered:
      if (!(lambda_nm > 300.0)) {
        throw std::invalid_argument("normalize_wavelength: log normalization needs lambda > 300 nm");
      }
      return std::log10(lambda_nm - 300.0) - 2.0;
  }
  throw std::invalid_argument("normalize_wavelength: unknown variant");
}

Eigen::VectorXd spectral_encode(double lambda_nm, int dims, EncodingVariant variant) {
  if (dims < 2 || dims % 2 != 0) throw std::invalid_argument("spectral_encode: dims must be even and >= 2");
  const double norm = normalize_wavelength(lambda_nm, variant);
  const double d = static_cast<double>(dims);
  Eigen::VectorXd enc(dims);
  if (variant == EncodingVariant::SharedFrequency) {
    for (int j = 0; j < dims / 2; ++j) {
      const double y = norm / std::pow(10000.0, 2.0 * j / d);
      enc[2 * j] = std::sin(y);
      enc[2 * j + 1] = std::cos(y);
    }
  } else {
    for (int i = 0; i < dims; ++i) {
      const double x = norm / std::pow(10000.0, 2.0 * i / d);
      enc[i] = (i % 2 == 0) ? std::sin(x) : std::cos(x);
    }
  }
  return enc;
}

namespace {

double percentile_sorted(const std::vector<double>& sorted, double pct) {
  const double pos = pct / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

}  // namespace

template <typename T>
Eigen::VectorXd band_statistics(std::span<const T> pixels, StatsVariant variant) {
  if (pixels.empty()) throw std::invalid_argument("band_statistics: empty band");
  const Eigen::Map<const Array<T>> px(pixels.data(), static_cast<Index>(pixels.size()));
  if (variant == StatsVariant::FourSummary) {
    // Two passes over the plane: sum/min/max, then centred squares.
    const Index n = px.size();
    double sum = 0.0, sq = 0.0;
    T lo = px[0], hi = px[0];
#pragma omp simd reduction(+ : sum) reduction(min : lo) reduction(max : hi)
    for (Index i = 0; i < n; ++i) {
      sum += static_cast<double>(px[i]);
      lo = std::min(lo, px[i]);
      hi = std::max(hi, px[i]);
    }
    const double mu = sum / static_cast<double>(n);
#pragma omp simd reduction(+ : sq)
    for (Index i = 0; i < n; ++i) {
      const double d = static_cast<double>(px[i]) - mu;
      sq += d * d;
    }
    const double var = sq / static_cast<double>(n);
    Eigen::VectorXd s(4);
    s << static_cast<double>(lo), static_cast<double>(hi), mu, std::sqrt(var);
    return s;
  }
  std::vector<double> sorted(pixels.begin(), pixels.end());
  std::sort(sorted.begin(), sorted.end());
  Eigen::VectorXd s(5);
  s << percentile_sorted(sorted, 1), percentile_sorted(sorted, 10), percentile_sorted(sorted, 50),
      percentile_sorted(sorted, 90), percentile_sorted(sorted, 99);
  return s;
}

template <typename T>
Eigen::VectorXd build_descriptor(const BandSpec& spec, std::span<const T> pixels, const DescriptorOptions& options) {
  spec.validate();
  options.validate();
  const int half = options.encoding_dims / 2;
  Eigen::VectorXd d(options.width());
  d.segment(0, half) = spectral_encode(spec.lambda_min_nm, half, options.encoding);
  d.segment(half, half) = spectral_encode(spec.lambda_max_nm, half, options.encoding);
  d.tail(stats_width(options.stats)) = band_statistics(pixels, options.stats);
  return d;
}

template <typename T>
DescriptorBatch<T> build_descriptor_batch(std::span<const BandSpec> specs, const Tensor<T>& bands, Index n_real,
                                          const DescriptorOptions& options) {
  if (bands.rank() != 3) throw std::invalid_argument("build_descriptor_batch: bands must be B x H x W");
  const Index bmax = bands.dim(0);
  const Index plane = bands.dim(1) * bands.dim(2);
  if (n_real < 1 || n_real > bmax) {
    throw std::invalid_argument("build_descriptor_batch: need 1 <= n_real <= Bmax, got n_real=" +
                                std::to_string(n_real));
  }
  if (static_cast<Index>(specs.size()) < n_real) {
    throw std::invalid_argument("build_descriptor_batch: fewer band specs than real bands");
  }

  DescriptorBatch<T> out;
  out.n_real = n_real;
  Array<T> rows = Array<T>::Zero(bmax * options.width());
  out.validity.assign(static_cast<std::size_t>(bmax), false);
  for (Index b = 0; b < bmax; ++b) {
    std::span<const T> px(bands.data() + b * plane, static_cast<std::size_t>(plane));
    if (b < n_real) {
      Eigen::VectorXd d = build_descriptor(specs[static_cast<std::size_t>(b)], px, options);
      rows.segment(b * options.width(), options.width()) = d.cast<T>().array();
      out.validity[static_cast<std::size_t>(b)] = true;
    } else {
      const T pad = static_cast<T>(kPaddingValue);
      for (T v : px) {
        if (v != pad) throw std::invalid_argument("build_descriptor_batch: padding band is not filled with -0.5");
      }
    }
  }
  out.descriptors = Tensor<T>(Shape{bmax, options.width()}, std::move(rows));
  return out;
}

template Eigen::VectorXd band_statistics(std::span<const float>, StatsVariant);
template Eigen::VectorXd band_statistics(std::span<const double>, StatsVariant);
template Eigen::VectorXd build_descriptor(const BandSpec&, std::span<const float>, const DescriptorOptions&);
template Eigen::VectorXd build_descriptor(const BandSpec&, std::span<const double>, const DescriptorOptions&);
template DescriptorBatch<float> build_descriptor_batch(std::span<const BandSpec>, const Tensor<float>&, Index,
                                                       const DescriptorOptions&);
template DescriptorBatch<double> build_descriptor_batch(std::span<const BandSpec>, const Tensor<double>&, Index,
                                                        const DescriptorOptions&);

}  // namespace bandfuse
