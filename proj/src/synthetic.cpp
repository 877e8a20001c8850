#include "bandfuse/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace bandfuse {

std::vector<BandSpec> landsat_like_specs() {
  return {{433, 453}, {450, 515}, {525, 600}, {630, 680}, {845, 885}};
}

namespace {

// Periodic separable Gaussian blur of an n x n field, then standardized.
std::vector<double> smooth_field(Index n, double sigma, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> f(static_cast<std::size_t>(n * n));
  for (auto& v : f) v = gauss(rng);

  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int k = -radius; k <= radius; ++k) kernel[static_cast<std::size_t>(k + radius)] = std::exp(-0.5 * k * k / (sigma * sigma));

  auto wrap = [n](Index i) { return ((i % n) + n) % n; };
  std::vector<double> tmp(f.size());
  for (Index y = 0; y < n; ++y)
    for (Index x = 0; x < n; ++x) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k) s += kernel[static_cast<std::size_t>(k + radius)] * f[static_cast<std::size_t>(y * n + wrap(x + k))];
      tmp[static_cast<std::size_t>(y * n + x)] = s;
    }
  for (Index y = 0; y < n; ++y)
    for (Index x = 0; x < n; ++x) {
      double s = 0.0;
      for (int k = -radius; k <= radius; ++k) s += kernel[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(wrap(y + k) * n + x)];
      f[static_cast<std::size_t>(y * n + x)] = s;
    }

  double mean = 0.0, sq = 0.0;
  for (double v : f) mean += v;
  mean /= static_cast<double>(f.size());
  for (double v : f) sq += (v - mean) * (v - mean);
  const double sd = std::sqrt(sq / static_cast<double>(f.size()));
  for (auto& v : f) v = (v - mean) / (sd > 0 ? sd : 1.0);
  return f;
}

}  // namespace

TileSample make_synthetic_tile(const SyntheticOptions& o, std::uint64_t index) {
  if (o.size < 2) throw std::invalid_argument("synthetic: tile size must be >= 2");
  if (!(o.cloud_sigma > 0 && o.surface_sigma > 0)) throw std::invalid_argument("synthetic: sigmas must be positive");
  if (!(o.thin_threshold < o.thick_threshold)) throw std::invalid_argument("synthetic: thin threshold must be below thick");
  std::seed_seq seq{static_cast<std::uint32_t>(o.seed), static_cast<std::uint32_t>(o.seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  const Index n = o.size, plane = n * n;

  // Shift the cloud field per tile so cloud cover varies between tiles.
  std::uniform_real_distribution<double> shift(-0.8, 0.8);
  const double offset = shift(rng);
  auto cloud = smooth_field(n, o.cloud_sigma, rng);
  auto surface = smooth_field(n, o.surface_sigma, rng);
  std::uniform_real_distribution<double> brightness(0.85, 1.15);
  const double gain = brightness(rng);

  const auto specs = landsat_like_specs();
  std::normal_distribution<double> noise(0.0, o.noise);
  std::vector<Label> mask(static_cast<std::size_t>(plane));
  std::vector<double> opacity(static_cast<std::size_t>(plane));
  for (Index p = 0; p < plane; ++p) {
    const double z = cloud[static_cast<std::size_t>(p)] + offset;
    CloudClass c = CloudClass::Clear;
    double a = 0.0;
    if (z >= o.thick_threshold) {
      c = CloudClass::ThickCloud;
      a = 0.8 + 0.05 * std::min(z - o.thick_threshold, 2.0);
    } else if (z >= o.thin_threshold) {
      c = CloudClass::ThinCloud;
      a = 0.3 + 0.15 * (z - o.thin_threshold) / (o.thick_threshold - o.thin_threshold);
    }
    mask[static_cast<std::size_t>(p)] = static_cast<Label>(c);
    opacity[static_cast<std::size_t>(p)] = a;
  }

  Array<float> v(static_cast<Index>(specs.size()) * plane);
  for (std::size_t b = 0; b < specs.size(); ++b) {
    const double t = (0.5 * (specs[b].lambda_min_nm + specs[b].lambda_max_nm) - 400.0) / 600.0;
    const double cloud_reflectance = 0.85 - 0.1 * t;
    for (Index p = 0; p < plane; ++p) {
      const double s = surface[static_cast<std::size_t>(p)];
      const double ground = std::max(0.0, gain * (0.05 + 0.22 * t + 0.04 * s * (0.5 + t)));
      const double a = opacity[static_cast<std::size_t>(p)];
      const double r = (1.0 - a) * ground + a * cloud_reflectance + noise(rng);
      v[static_cast<Index>(b) * plane + p] = static_cast<float>(std::clamp(r, 0.0, 1.0));
    }
  }
  TileSample tile{Tensor<float>(Shape{static_cast<Index>(specs.size()), n, n}, std::move(v)), specs, std::move(mask)};
  return tile;
}

std::vector<TileSample> make_synthetic_dataset(const SyntheticOptions& options, std::size_t count,
                                               std::uint64_t first_index) {
  std::vector<TileSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_synthetic_tile(options, first_index + i));
  return out;
}

}  // namespace bandfuse
