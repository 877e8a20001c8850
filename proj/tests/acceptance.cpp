// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include "bandfuse/bench.hpp"
#include "bandfuse/encoder.hpp"
#include "bandfuse/gradcheck.hpp"
#include "bandfuse/io.hpp"
#include "bandfuse/metrics.hpp"
#include "bandfuse/ops.hpp"
#include "bandfuse/quantize.hpp"
#include "bandfuse/segnet.hpp"
#include "bandfuse/synthetic.hpp"
#include "bandfuse/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <type_traits>

using namespace bandfuse;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> d(lo, hi);
  Array<T> v(shape_size(shape));
  for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<T>(d(rng));
  return Tensor<T>(std::move(shape), std::move(v));
}

// Elementwise relative deviation. In 64-bit this is the strict test; in
// 32-bit one-ulp noise at near-zero outputs makes it ill-conditioned, so the
// float path is measured against the tensor's magnitude instead.
template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b) {
  const auto x = a.values().template cast<double>(), y = b.values().template cast<double>();
  if constexpr (std::is_same_v<T, double>) return ((x - y).abs() / x.abs().max(y.abs()).max(1e-300)).maxCoeff();
  return (x - y).abs().maxCoeff() / std::max(x.abs().maxCoeff(), y.abs().maxCoeff());
}

// Zero-initialized biases would make the body trivially symmetric.
template <typename T>
void jitter_biases(EncoderParams<T>& p, std::uint64_t seed, double lo, double hi) {
  auto r = [&](Dense<T>& d) { d.bias = random_tensor<T>(d.bias.shape(), seed++, lo, hi); };
  for (auto& d : p.expand) r(d);
  for (auto& d : p.contract) r(d);
  for (auto& l : p.layers)
    for (Dense<T>* d : {&l.query, &l.key, &l.value, &l.output, &l.ffn_in, &l.ffn_out}) r(*d);
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

// 1. Level-3 output is unchanged by appended padding bands.
template <typename T>
double padding_deviation() {
  EncoderConfig c;
  c.padding_level = PaddingLevel::RealBandsMasked;
  auto p = init_encoder<T>(c, 1);
  jitter_biases(p, 100, -0.3, 0.3);
  const auto specs = landsat_like_specs();
  double worst = 0.0;
  for (Index k : {1, 2, 5}) {
    const auto real = random_tensor<T>({k, 64, 64}, 10 + k, 0.0, 1.0);
    const auto bare = encoder_forward(real, std::span<const BandSpec>(specs), k, p, c);
    for (Index pad : {0, 1, 5, 9}) {
      const auto out = encoder_forward(pad_bands(real, k + pad), std::span<const BandSpec>(specs), k, p, c);
      worst = std::max(worst, max_rel_diff(bare, out));
    }
  }
  return worst;
}

Outcome padding_invariance() {
  const double d = padding_deviation<double>(), f = padding_deviation<float>();
  return {d <= 1e-5 && f <= 1e-5, "k={1,2,5}, p={0,1,5,9}: f64 elementwise " + fmt(d) + ", f32 vs magnitude " + fmt(f)};
}

// Shared toy setup for the trained criteria.
struct ToySetup {
  std::vector<TileSample> train, validation;
  EncoderConfig encoder;
  SegNetConfig segnet;
  TrainConfig config;
};

ToySetup toy_setup() {
  ToySetup s;
  SyntheticOptions so;
  s.train = make_synthetic_dataset(so, 300);
  s.validation = make_synthetic_dataset(so, 24, 100000);
  s.encoder.expand_widths = {32};
  s.encoder.d_token = 32;
  s.encoder.d_ffn = 64;
  s.encoder.n_layers = 1;
  s.encoder.contract_widths = {16};
  s.segnet.n_stages = 2;
  s.config.base_lr = 5e-3;
  s.config.batch_size = 16;
  s.config.epochs = 5;
  s.config.steps_per_epoch = 40;
  s.config.warmup_epochs = 3;
  s.config.max_bands = 8;
  s.config.random_band_subsets = true;
  s.config.augment = true;
  return s;
}

struct Trained {
  Model<float> model;
  TrainResult result;
};

Trained train_toy(const ToySetup& s, PaddingLevel level, std::uint64_t seed) {
  EncoderConfig ec = s.encoder;
  ec.padding_level = level;
  TrainConfig cfg = s.config;
  cfg.seed = seed;
  Trained t{make_model<float>(ec, s.segnet, seed), {}};
  t.result = train(t.model, std::span<const TileSample>(s.train), cfg);
  return t;
}

double miou(const Model<float>& m, const ToySetup& s, EvalOptions opts) {
  return class_metrics(evaluate(m, std::span<const TileSample>(s.validation), opts)).miou;
}

double single_band_miou(const Model<float>& m, const ToySetup& s) {
  double total = 0.0;
  for (Index b = 0; b < 5; ++b) total += miou(m, s, EvalOptions{s.config.max_bands, false, std::vector<Index>{b}});
  return total / 5.0;
}

// 2. Level 1 divides by Bmax and so collapses when few bands are real.
Outcome padding_separation(const ToySetup& s, const Trained& level3_seed1) {
  double l1 = 0.0, l3 = 0.0;
  std::ostringstream detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const double a = single_band_miou(train_toy(s, PaddingLevel::AllBands, seed).model, s);
    const double b = seed == 1 ? single_band_miou(level3_seed1.model, s)
                               : single_band_miou(train_toy(s, PaddingLevel::RealBandsMasked, seed).model, s);
    detail << "seed " << seed << ": L1 " << fmt(a) << " L3 " << fmt(b) << "; ";
    l1 += a / 3.0;
    l3 += b / 3.0;
  }
  detail << "mean single-band mIoU L1 " << fmt(l1) << " vs L3 " << fmt(l3) << " (margin 0.02)";
  return {l1 < l3 - 0.02, detail.str()};
}

// 3. Shuffling (band, spec) pairs leaves the output unchanged.
template <typename T>
double permutation_deviation() {
  EncoderConfig c;
  auto p = init_encoder<T>(c, 3);
  jitter_biases(p, 300, -0.3, 0.3);
  const auto base_specs = landsat_like_specs();
  std::mt19937_64 rng(33);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Index k = 2 + static_cast<Index>(rng() % 4);
    const Index pad = static_cast<Index>(rng() % 4);
    const auto real = random_tensor<T>({k, 64, 64}, 1000 + trial, 0.0, 1.0);
    std::vector<BandSpec> specs(base_specs.begin(), base_specs.begin() + k);
    std::vector<Index> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Array<T> pv(real.size());
    std::vector<BandSpec> ps;
    for (Index i = 0; i < k; ++i) {
      pv.segment(i * 4096, 4096) = real.values().segment(perm[i] * 4096, 4096);
      ps.push_back(specs[static_cast<std::size_t>(perm[i])]);
    }
    const auto a = encoder_forward(pad_bands(real, k + pad), std::span<const BandSpec>(specs), k, p, c);
    const auto b = encoder_forward(pad_bands(Tensor<T>(Shape{k, 64, 64}, pv), k + pad),
                                   std::span<const BandSpec>(ps), k, p, c);
    worst = std::max(worst, max_rel_diff(a, b));
  }
  return worst;
}

Outcome permutation_invariance() {
  const double d = permutation_deviation<double>(), f = permutation_deviation<float>();
  return {d < 1e-5 && f < 1e-5, "100 trials: f64 elementwise " + fmt(d) + ", f32 vs magnitude " + fmt(f)};
}

// 4. Analytic gradients against central differences in double precision.
Outcome gradient_checks() {
  using D = double;
  double worst = 0.0;
  std::string worst_name;
  auto record = [&](const std::string& name, const GradCheckResult& r) {
    if (r.max_rel_error > worst || worst_name.empty()) {
      worst = std::max(worst, r.max_rel_error);
      worst_name = name;
    }
  };
  auto weighted = [](const Tensor<D>& y) { return sum(mul(y, random_tensor<D>(y.shape(), 99))); };
  auto unary = [&](const std::string& name, const std::function<Tensor<D>(const Tensor<D>&)>& f, const Tensor<D>& at) {
    record(name, finite_diff_check([&](const Tensor<D>& x) { return weighted(f(x)); }, at));
  };

  const auto a = random_tensor<D>({3, 4}, 1), b = random_tensor<D>({3, 4}, 2);
  const auto m = random_tensor<D>({4, 5}, 3), bias = random_tensor<D>({5}, 4);
  unary("add", [&](const Tensor<D>& x) { return add(x, b); }, a);
  unary("mul", [&](const Tensor<D>& x) { return mul(x, b); }, a);
  unary("scale", [&](const Tensor<D>& x) { return scale(x, 2.5); }, a);
  record("mean", finite_diff_check([&](const Tensor<D>& x) { return mean(mul(x, x)); }, a));
  unary("reshape", [&](const Tensor<D>& x) { return reshape(x, {4, 3}); }, a);
  auto off_kink = random_tensor<D>({3, 4}, 1);
  Array<D>& ov = off_kink.mutable_values();
  for (Index i = 0; i < ov.size(); ++i) ov[i] += ov[i] >= 0 ? 0.1 : -0.1;
  unary("relu", [&](const Tensor<D>& x) { return relu(x); }, off_kink);
  unary("matmul", [&](const Tensor<D>& x) { return matmul(x, m); }, a);
  unary("transpose", [&](const Tensor<D>& x) { return transpose(x); }, a);
  unary("linear", [&](const Tensor<D>& x) { return linear(a, m, x); }, bias);
  unary("add_row_bias", [&](const Tensor<D>& x) { return add_row_bias(matmul(a, m), x); }, bias);
  unary("slice_cols", [&](const Tensor<D>& x) { return slice_cols(x, 1, 2); }, a);
  unary("concat_cols", [&](const Tensor<D>& x) { return concat_cols<D>({slice_cols(x, 2, 2), x}); }, a);
  unary("mask_rows", [&](const Tensor<D>& x) { return mask_rows(x, {true, false, true}); }, a);
  const auto g = random_tensor<D>({4}, 5, 0.5, 1.5), be = random_tensor<D>({4}, 6);
  unary("layer_norm", [&](const Tensor<D>& x) { return layer_norm(x, g, be, 1e-5); }, a);
  unary("layer_norm.gamma", [&](const Tensor<D>& x) { return layer_norm(a, x, be, 1e-5); }, g);
  unary("masked_softmax", [&](const Tensor<D>& x) { return masked_softmax(x, {true, false, true, true}); }, a);
  const auto img = random_tensor<D>({2, 4, 6}, 7), w = random_tensor<D>({3, 2, 3, 3}, 8), cb = random_tensor<D>({3}, 9);
  unary("conv2d.x", [&](const Tensor<D>& x) { return conv2d_3x3_same(x, w, cb); }, img);
  unary("conv2d.w", [&](const Tensor<D>& x) { return conv2d_3x3_same(img, x, cb); }, w);
  unary("conv2d.b", [&](const Tensor<D>& x) { return conv2d_3x3_same(img, w, x); }, cb);
  unary("maxpool", [&](const Tensor<D>& x) { return maxpool_2x2(x); }, img);
  unary("upsample", [&](const Tensor<D>& x) { return upsample_nearest_2x(x); }, img);
  std::vector<Label> labels(16);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<Label>(i % 3);
  labels[5] = kIgnoreLabel;
  record("cross_entropy", finite_diff_check([&](const Tensor<D>& x) { return cross_entropy_mean(x, std::span<const Label>(labels)); },
                                            random_tensor<D>({3, 4, 4}, 10, -2, 2)));
  // The straight-through estimator treats fake quantization as identity
  // inside the clip range, so its gradient is checked against that surrogate.
  {
    GradTape<D> tape;
    auto probe = random_tensor<D>({10}, 11, -0.9, 0.9);
    probe.set_requires_grad(true);
    tape.backward(sum(fake_quantize(probe, QuantSpec{8, QuantMode::SymmetricWeight, 1.0 / 127.0})));
    double err = 0.0;
    for (Index i = 0; i < probe.size(); ++i) err = std::max(err, std::abs((*probe.grad())[i] - 1.0));
    record("fake_quantize", GradCheckResult{err});
  }

  EncoderConfig ec;
  ec.descriptor.encoding_dims = 4;
  ec.expand_widths = {6};
  ec.d_token = 4;
  ec.n_heads = 2;
  ec.d_ffn = 8;
  ec.n_layers = 1;
  ec.contract_widths = {3};
  ec.c_out = 2;
  const std::vector<BandSpec> specs{{450, 515}, {525, 600}, {630, 680}, {845, 885}};
  for (auto level : {PaddingLevel::AllBands, PaddingLevel::RealBands, PaddingLevel::RealBandsMasked}) {
    for (auto block : {OutputBlock::BandMultiplication, OutputBlock::BandEmbedding}) {
      EncoderConfig c = ec;
      c.padding_level = level;
      c.output_block = block;
      auto params = init_encoder<D>(c, 21);
      jitter_biases(params, 50, 0.05, 0.2);
      const auto bands = pad_bands(random_tensor<D>({3, 4, 4}, 22, 0.0, 1.0), 4);
      record("encoder L" + std::to_string(static_cast<int>(level)),
             finite_diff_check_params(
                 [&] { return weighted(encoder_forward(bands, std::span<const BandSpec>(specs), 3, params, c)); },
                 params.parameters()));
    }
  }

  SegNetConfig sc;
  sc.in_channels = ec.c_out;
  sc.base_channels = 1;
  sc.n_stages = 2;
  auto enc = init_encoder<D>(ec, 31);
  jitter_biases(enc, 60, 0.05, 0.2);
  auto seg = init_segnet<D>(sc, 32);
  for (std::size_t i = 0; i < seg.convs.size(); ++i)
    seg.convs[i].bias = random_tensor<D>(seg.convs[i].bias.shape(), 40 + i, 0.05, 0.2);
  seg.convs.back().weight = random_tensor<D>(seg.convs.back().weight.shape(), 70);
  const auto bands = pad_bands(random_tensor<D>({3, 16, 16}, 33, 0.0, 1.0), 4);
  std::vector<Label> seg_labels(256);
  std::mt19937_64 rng(34);
  for (auto& l : seg_labels) l = static_cast<Label>(rng() % 3);
  auto params = enc.parameters();
  for (auto& t : seg.parameters()) params.push_back(t);
  record("encoder+segnet loss", finite_diff_check_params(
                                    [&] {
                                      auto f = encoder_forward(bands, std::span<const BandSpec>(specs), 3, enc, ec);
                                      return cross_entropy_mean(segnet_forward(f, seg, sc),
                                                                std::span<const Label>(seg_labels));
                                    },
                                    params));
  return {worst <= 1e-4, "worst relative error " + fmt(worst) + " (" + worst_name + ")"};
}

// 5. Linear normalization spins dimension 0 through many cycles; log
// normalization keeps it inside one.
Outcome encoding_regression() {
  auto cycles = [](EncodingVariant v) {
    int crossings = 0;
    double prev = spectral_encode(400, 2, v)[0];
    for (int lambda = 401; lambda <= 1000; ++lambda) {
      const double cur = spectral_encode(lambda, 2, v)[0];
      if (prev < 0 && cur >= 0) ++crossings;
      prev = cur;
    }
    return crossings;
  };
  const int fast = cycles(EncodingVariant::SharedFrequency);
  const int logv = cycles(EncodingVariant::LogStaggered);
  const double log_phase = normalize_wavelength(1000, EncodingVariant::LogStaggered) -
                           normalize_wavelength(400, EncodingVariant::LogStaggered);
  double pair_err = 0.0;
  for (double lambda = 400; lambda <= 1000; lambda += 0.37) {
    const auto e = spectral_encode(lambda, 32, EncodingVariant::SharedFrequency);
    for (int j = 0; j < 16; ++j) pair_err = std::max(pair_err, std::abs(e[2 * j] * e[2 * j] + e[2 * j + 1] * e[2 * j + 1] - 1.0));
  }
  const bool ok = fast >= 90 && logv <= 1 && log_phase < 2 * std::numbers::pi && pair_err <= 1e-12;
  return {ok, "linear " + std::to_string(fast) + " cycles, log " + std::to_string(logv) + " (phase span " +
                  fmt(log_phase) + " rad), max |sin^2+cos^2-1| " + fmt(pair_err)};
}

// 6. Trainable parameter counts.
Outcome parameter_count() {
  const Index def = encoder_parameter_count(EncoderConfig{});
  const Index orig = encoder_parameter_count(EncoderConfig::original_size());
  const Index counted = init_encoder<float>(EncoderConfig{}, 0).parameter_count();
  const bool ok = def >= 90000 && def <= 140000 && counted == def && orig >= 2.5 * def;
  return {ok, "default " + std::to_string(def) + ", original size " + std::to_string(orig) + " (" +
                  fmt(static_cast<double>(orig) / def, 3) + "x)"};
}

// 7. Relative throughput on this machine.
Outcome throughput() {
  const auto def = bench_encoder("default", 5, 512, 50, 5);
  const auto emb = bench_encoder("band-embedding", 5, 512, 50, 5);
  const auto wide = bench_encoder("out32", 5, 512, 20, 3);
  const auto b1 = bench_encoder("default", 1, 512, 50, 5);
  const auto b10 = bench_encoder("default", 10, 512, 50, 5);
  const double r_emb = def.fps / emb.fps, r_wide = def.fps / wide.fps;
  const bool mono = b1.median_ms < def.median_ms && def.median_ms < b10.median_ms;
  const bool ok = r_emb >= 2.0 && r_wide >= 2.5 && mono;
  return {ok, "FPS ratio multiply/embedding " + fmt(r_emb, 3) + ", 4-out/32-out " + fmt(r_wide, 3) + "; latency 1/5/10 bands " +
                  fmt(b1.median_ms, 3) + "/" + fmt(def.median_ms, 3) + "/" + fmt(b10.median_ms, 3) + " ms"};
}

// 8. End-to-end toy training.
Outcome toy_training(const ToySetup& s, const Trained& t) {
  const auto& losses = t.result.losses;
  double tail = 0.0;
  for (std::size_t i = losses.size() - 10; i < losses.size(); ++i) tail += losses[i] / 10.0;
  const double held_out = miou(t.model, s, EvalOptions{s.config.max_bands, false, std::nullopt});
  const bool ok = losses.size() == 200 && tail <= 0.5 * losses.front() && held_out >= 0.8;
  return {ok, std::to_string(losses.size()) + " steps, loss " + fmt(losses.front()) + " -> " + fmt(tail) +
                  " (last-10 mean), held-out mIoU " + fmt(held_out)};
}

std::vector<std::vector<Label>> predictions(const Model<float>& m, const ToySetup& s, bool quantized) {
  std::vector<std::vector<Label>> out;
  for (const auto& tile : s.validation) out.push_back(predict_classes(model_forward(m, tile, s.config.max_bands, quantized)));
  return out;
}

double agreement(const std::vector<std::vector<Label>>& a, const std::vector<std::vector<Label>>& b) {
  std::size_t same = 0, total = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j, ++total) same += a[i][j] == b[i][j];
  return static_cast<double>(same) / static_cast<double>(total);
}

// 9. 8/4/4-bit fake-quantized segnet against the float model. Pixel
// agreement is reported only: QAT tunes the weights for the quantized path,
// so neither float reference is expected to match it pixel for pixel.
Outcome quantization(const ToySetup& s, Trained& t) {
  const EvalOptions float_opts{s.config.max_bands, false, std::nullopt};
  const EvalOptions quant_opts{s.config.max_bands, true, std::nullopt};
  const double float_miou = miou(t.model, s, float_opts);
  const auto before = predictions(t.model, s, false);
  calibrate_model(t.model, std::span<const TileSample>(s.train).first(32), s.config.max_bands);
  const double ptq = miou(t.model, s, quant_opts);
  quantization_aware_finetune(t.model, std::span<const TileSample>(s.train), s.config, 400, 5e-4);
  const double qat = miou(t.model, s, quant_opts);
  const auto quantized = predictions(t.model, s, true);
  const double same_weights = agreement(quantized, predictions(t.model, s, false));
  const double vs_before = agreement(quantized, before);
  const bool ok = float_miou - qat <= 0.02;
  return {ok, "float mIoU " + fmt(float_miou) + ", calibrated only " + fmt(ptq) + ", after QAT " + fmt(qat) +
                  "; argmax agreement with float path " + fmt(100 * same_weights, 4) + "% (with pre-QAT model " +
                  fmt(100 * vs_before, 4) + "%)"};
}

// 10. Metrics against a per-pixel brute-force oracle.
Outcome metric_oracle() {
  std::mt19937_64 rng(10);
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<Label> pred(64), truth(64);
    // Some trials restrict the label range so that absent classes occur.
    const int span = 1 + trial % 3;
    for (int i = 0; i < 64; ++i) {
      pred[i] = static_cast<Label>(rng() % span);
      truth[i] = rng() % 5 == 0 ? kIgnoreLabel : static_cast<Label>(rng() % span);
    }
    ConfusionMatrix cm;
    update_confusion(cm, std::span<const Label>(pred), std::span<const Label>(truth));
    const auto report = class_metrics(cm);

    std::uint64_t counts[3][3] = {};
    for (int i = 0; i < 64; ++i)
      if (truth[i] != kIgnoreLabel) ++counts[truth[i]][pred[i]];
    double miou_sum = 0.0;
    for (int c = 0; c < 3; ++c) {
      std::uint64_t tp = counts[c][c], fp = 0, fn = 0;
      for (int o = 0; o < 3; ++o) {
        if (cm.count(c, o) != counts[c][o]) ++mismatches;
        if (o != c) {
          fp += counts[o][c];
          fn += counts[c][o];
        }
      }
      const bool absent = tp + fp + fn == 0;
      const double prec = absent ? 1.0 : tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
      const double rec = absent ? 1.0 : tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
      const double iou = absent ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
      const auto& m = report.per_class[static_cast<std::size_t>(c)];
      if (m.precision != prec || m.recall != rec || m.iou != iou || m.absent != absent) ++mismatches;
      miou_sum += iou;
    }
    if (report.miou != miou_sum / 3.0) ++mismatches;
  }
  return {mismatches == 0, "1000 random 8x8 pairs, " + std::to_string(mismatches) + " mismatches"};
}

// 11. File format and calibration exactness.
Outcome formats() {
  std::random_device rd;
  const fs::path dir = fs::temp_directory_path() / ("bandfuse_acceptance_" + std::to_string(rd()));
  fs::create_directories(dir);
  TileSample tile;
  tile.bands = random_tensor<float>({5, 64, 48}, 11, -0.1, 1.3);
  tile.specs = landsat_like_specs();
  write_mstf(dir / "a.mstf", tile);
  const auto back = read_mstf(dir / "a.mstf");
  write_mstf(dir / "b.mstf", back);
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const bool bitwise = back.bands.shape() == tile.bands.shape() &&
                       std::memcmp(back.bands.data(), tile.bands.data(), sizeof(float) * tile.bands.size()) == 0 &&
                       slurp(dir / "a.mstf") == slurp(dir / "b.mstf");
  fs::remove_all(dir);
  const bool toa = toa_landsat(5000) == 0.0 && toa_landsat(0) == -0.1 && toa_sentinel(10000) == 1.0;
  const auto q = quantize_input_u8(Tensor<float>::from({5}, {-0.3f, 0.0f, 0.5f, 1.0f, 1.2f}));
  const bool clip = q.codes == std::vector<std::uint8_t>{0, 0, 128, 255, 255} && q.values[4] == 1.0f &&
                    q.values[0] == 0.0f && q.values[2] == 128.0f / 255.0f;
  return {bitwise && toa && clip, std::string("MSTF round trip ") + (bitwise ? "bitwise" : "differs") + ", TOA " +
                                      (toa ? "exact" : "inexact") + ", u8 clipping " + (clip ? "ok" : "wrong")};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& run) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!o.pass) ++failures;
    std::cout << "criterion " << std::setw(2) << id << " " << (o.pass ? "PASS" : "FAIL") << "  " << name << ": "
              << o.detail << " [" << fmt(secs, 3) << " s]" << std::endl;
  };

  report(1, "level-3 padding invariance", padding_invariance);
  const ToySetup toy = toy_setup();
  std::optional<Trained> level3;
  auto trained = [&]() -> Trained& {
    if (!level3) level3 = train_toy(toy, PaddingLevel::RealBandsMasked, 1);
    return *level3;
  };
  report(2, "padding-level separation", [&] { return padding_separation(toy, trained()); });
  report(3, "band permutation invariance", permutation_invariance);
  report(4, "gradient correctness", gradient_checks);
  report(5, "spectral encoding regression", encoding_regression);
  report(6, "parameter count", parameter_count);
  report(7, "relative throughput", throughput);
  report(8, "toy end-to-end training", [&] { return toy_training(toy, trained()); });
  report(9, "quantization fidelity", [&] { return quantization(toy, trained()); });
  report(10, "metric oracle equivalence", metric_oracle);
  report(11, "format and calibration exactness", formats);
  report(12, "non-reproducibility note", [] {
    return Outcome{true,
                   "absolute mIoU tables need the full datasets and GPU-scale training and are out of scope; "
                   "criteria 2, 8 and 9 check their structural analogues, and absolute FPS is hardware-bound"};
  });
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " criteria FAILED") << std::endl;
  return failures == 0 ? 0 : 1;
}
