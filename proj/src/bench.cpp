#include "bandfuse/bench.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <sys/resource.h>

namespace bandfuse {

const std::vector<std::string>& bench_variant_names() {
  static const std::vector<std::string> names{"default", "band-embedding", "out32", "orig-size", "log-encoding"};
  return names;
}

EncoderConfig bench_variant_config(const std::string& name) {
  EncoderConfig c;
  if (name == "default") return c;
  if (name == "band-embedding") {
    c.output_block = OutputBlock::BandEmbedding;
  } else if (name == "out32") {
    c.c_out = 32;
  } else if (name == "orig-size") {
    c = EncoderConfig::original_size();
  } else if (name == "log-encoding") {
    c.descriptor.encoding = EncodingVariant::LogStaggered;
  } else {
    throw std::invalid_argument("unknown bench variant '" + name + "'");
  }
  return c;
}

std::optional<double> peak_rss_mb() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0) return std::nullopt;
  return static_cast<double>(usage.ru_maxrss) / 1024.0;  // kilobytes on Linux
}

BenchReport bench_encoder(const std::string& variant, Index bands, Index size, int iterations, int warmup,
                          std::uint64_t seed) {
  if (bands < 1) throw std::invalid_argument("bench: bands must be >= 1");
  if (size < 1) throw std::invalid_argument("bench: size must be >= 1");
  if (iterations < 10) throw std::invalid_argument("bench: need at least 10 timed iterations");
  if (warmup < 3) throw std::invalid_argument("bench: need at least 3 warmup runs");
  const EncoderConfig config = bench_variant_config(variant);
  const auto params = init_encoder<float>(config, seed);

  std::mt19937_64 rng(seed + 17);
  std::uniform_real_distribution<float> reflectance(0.0f, 1.0f);
  Array<float> v(bands * size * size);
  for (Index i = 0; i < v.size(); ++i) v[i] = reflectance(rng);
  const Tensor<float> tile(Shape{bands, size, size}, std::move(v));
  std::vector<BandSpec> specs;
  for (Index b = 0; b < bands; ++b) {
    const double centre = 420.0 + 560.0 * (bands == 1 ? 0.5 : static_cast<double>(b) / static_cast<double>(bands - 1));
    specs.push_back(BandSpec{centre - 15.0, centre + 15.0});
  }

  auto run = [&] { return encoder_forward(tile, std::span<const BandSpec>(specs), bands, params, config); };
  for (int i = 0; i < warmup; ++i) run();
  std::vector<double> times;
  for (int i = 0; i < iterations; ++i) {
    const auto start = std::chrono::steady_clock::now();
    Tensor<float> out = run();
    const auto stop = std::chrono::steady_clock::now();
    if (out.size() == 0) throw std::runtime_error("bench: empty encoder output");
    times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
  }
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const double median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);

  BenchReport r;
  r.variant = variant;
  r.bands = bands;
  r.height = r.width = size;
  r.iterations = iterations;
  r.warmup = warmup;
  r.median_ms = median;
  r.min_ms = sorted.front();
  r.max_ms = sorted.back();
  r.fps = 1000.0 / median;
  r.peak_rss_mb = peak_rss_mb();
  return r;
}

std::string format_bench_text(const BenchReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-15s bands=%-3lld %lldx%lld iters=%d median=%.3f ms min=%.3f max=%.3f fps=%.2f",
                r.variant.c_str(), static_cast<long long>(r.bands), static_cast<long long>(r.height),
                static_cast<long long>(r.width), r.iterations, r.median_ms, r.min_ms, r.max_ms, r.fps);
  std::string s = buf;
  if (r.peak_rss_mb) {
    std::snprintf(buf, sizeof(buf), " peak_rss=%.1f MB", *r.peak_rss_mb);
    s += buf;
  } else {
    s += " peak_rss=n/a";
  }
  return s;
}

std::string format_bench_json(const BenchReport& r) {
  nlohmann::json j{{"variant", r.variant},     {"bands", r.bands},         {"height", r.height},
                   {"width", r.width},         {"iterations", r.iterations}, {"warmup", r.warmup},
                   {"median_ms", r.median_ms}, {"min_ms", r.min_ms},       {"max_ms", r.max_ms},
                   {"fps", r.fps}};
  j["peak_rss_mb"] = r.peak_rss_mb ? nlohmann::json(*r.peak_rss_mb) : nlohmann::json(nullptr);
  return j.dump();
}

}  // namespace bandfuse
