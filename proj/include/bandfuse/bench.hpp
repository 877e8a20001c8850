#pragma once

#include "bandfuse/encoder.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bandfuse {

struct BenchReport {
  std::string variant;
  Index bands = 0;
  Index height = 0;
  Index width = 0;
  int iterations = 0;
  int warmup = 0;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  double fps = 0.0;  // 1000 / median_ms
  /// Peak resident set size of the process; empty where unavailable.
  std::optional<double> peak_rss_mb;
};

/// default, band-embedding, out32, orig-size, log-encoding.
const std::vector<std::string>& bench_variant_names();
EncoderConfig bench_variant_config(const std::string& name);

/// Encoder-only latency on a seeded random tile with `bands` real bands
/// spread over 400-1000 nm. Float, no gradient tape.
BenchReport bench_encoder(const std::string& variant, Index bands, Index size = 512, int iterations = 10,
                          int warmup = 3, std::uint64_t seed = 0);

std::optional<double> peak_rss_mb();

std::string format_bench_text(const BenchReport& report);
std::string format_bench_json(const BenchReport& report);

}  // namespace bandfuse
