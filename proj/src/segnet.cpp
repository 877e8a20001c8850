#include "bandfuse/segnet.hpp"

#include "bandfuse/quantize.hpp"

#include <cmath>
#include <iomanip>
#include <ostream>
#include <random>
#include <stdexcept>

namespace bandfuse {

void SegNetConfig::validate() const {
  if (in_channels < 1) throw std::invalid_argument("SegNetConfig: in_channels must be >= 1");
  if (base_channels < 1) throw std::invalid_argument("SegNetConfig: base_channels must be >= 1");
  if (n_stages < 1 || n_stages > 8) throw std::invalid_argument("SegNetConfig: n_stages must be in [1, 8]");
  if (n_classes < 1 || n_classes > 255) throw std::invalid_argument("SegNetConfig: n_classes must be in [1, 255]");
}

std::vector<int> SegNetConfig::channel_schedule() const {
  std::vector<int> s;
  for (int i = 0; i <= n_stages; ++i) s.push_back(base_channels << i);
  for (int i = n_stages - 1; i >= 0; --i) s.push_back(base_channels << i);
  return s;
}

long long ConvLayerInfo::macs(Index height, Index width) const {
  const long long h = height / downscale, w = width / downscale;
  return h * w * in_channels * out_channels * 9LL;
}

std::vector<ConvLayerInfo> segnet_layer_plan(const SegNetConfig& config) {
  config.validate();
  std::vector<ConvLayerInfo> plan;
  auto push = [&](std::string name, int cin, int cout, int downscale) -> ConvLayerInfo& {
    ConvLayerInfo info;
    info.name = std::move(name);
    info.in_channels = cin;
    info.out_channels = cout;
    info.downscale = downscale;
    info.input_from = static_cast<int>(plan.size()) - 1;
    plan.push_back(info);
    return plan.back();
  };

  int channels = config.in_channels;
  for (int s = 0; s < config.n_stages; ++s) {
    const int width = config.base_channels << s;
    push("down" + std::to_string(s + 1) + ".conv1", channels, width, 1 << s);
    push("down" + std::to_string(s + 1) + ".conv2", width, width, 1 << s).pool_after = true;
    channels = width;
  }
  const int bottleneck = config.base_channels << config.n_stages;
  push("bottleneck.conv1", channels, bottleneck, 1 << config.n_stages);
  push("bottleneck.conv2", bottleneck, bottleneck, 1 << config.n_stages);
  channels = bottleneck;
  for (int s = config.n_stages - 1; s >= 0; --s) {
    const int width = config.base_channels << s;
    const std::string stage = "up" + std::to_string(config.n_stages - s);
    push(stage + ".conv1", channels, width, 1 << s).upsample_before = true;
    push(stage + ".conv2", width, width, 1 << s);
    channels = width;
  }
  ConvLayerInfo& head = push("head", channels, config.n_classes, 1);
  head.relu = false;

  for (auto& layer : plan) layer.weight_bits = 4;
  plan.front().weight_bits = 8;
  plan.back().weight_bits = 8;
  return plan;
}

template <typename T>
std::vector<Tensor<T>> SegNetParams<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& c : convs) {
    out.push_back(c.weight);
    out.push_back(c.bias);
  }
  return out;
}

template <typename T>
Index SegNetParams<T>::parameter_count() const {
  Index n = 0;
  for (const auto& c : convs) n += c.weight.size() + c.bias.size();
  return n;
}

template <typename T>
template <typename U>
SegNetParams<U> SegNetParams<T>::cast() const {
  SegNetParams<U> out;
  for (const auto& c : convs) out.convs.push_back(ConvLayer<U>{c.weight.template cast<U>(), c.bias.template cast<U>()});
  out.scales = scales;
  return out;
}

void write_segnet_report(std::ostream& os, const SegNetConfig& config, Index height, Index width) {
  const auto plan = segnet_layer_plan(config);
  long long total_macs = 0, total_params = 0;
  os << std::left << std::setw(18) << "layer" << std::right << std::setw(6) << "cin" << std::setw(6) << "cout"
     << std::setw(8) << "res" << std::setw(10) << "params" << std::setw(14) << "MACs" << std::setw(6) << "bits"
     << '\n';
  for (const auto& l : plan) {
    const long long params = static_cast<long long>(l.in_channels) * l.out_channels * 9 + l.out_channels;
    const long long macs = l.macs(height, width);
    total_macs += macs;
    total_params += params;
    os << std::left << std::setw(18) << l.name << std::right << std::setw(6) << l.in_channels << std::setw(6)
       << l.out_channels << std::setw(8) << (std::to_string(height / l.downscale) + "^") << std::setw(10) << params
       << std::setw(14) << macs << std::setw(6) << l.weight_bits << '\n';
  }
  os << "total params " << total_params << ", MACs " << total_macs << " at " << height << "x" << width << '\n';
}

template <typename T>
SegNetParams<T> init_segnet(const SegNetConfig& config, std::uint64_t seed, std::ostream* log, Index log_height,
                            Index log_width) {
  const auto plan = segnet_layer_plan(config);
  std::mt19937_64 rng(seed);
  SegNetParams<T> params;
  for (const auto& l : plan) {
    const Index fan_in = static_cast<Index>(l.in_channels) * 9;
    std::uniform_real_distribution<double> dist(-std::sqrt(6.0 / fan_in), std::sqrt(6.0 / fan_in));
    Array<T> w(static_cast<Index>(l.out_channels) * fan_in);
    for (Index i = 0; i < w.size(); ++i) w[i] = static_cast<T>(dist(rng));
    // Zero head: initial logits are uniform, so the loss has no incentive to
    // silence the input features before the network has learned anything.
    if (!l.relu) w.setZero();
    params.convs.push_back(ConvLayer<T>{Tensor<T>(Shape{l.out_channels, l.in_channels, 3, 3}, std::move(w)),
                                        Tensor<T>(Shape{l.out_channels}, T(0))});
  }
  if (log != nullptr) write_segnet_report(*log, config, log_height, log_width);
  return params;
}

namespace {

enum class ForwardMode { Float, Quantized, Calibrate };

template <typename T>
Tensor<T> run_segnet(const Tensor<T>& x, const SegNetParams<T>& params, const SegNetConfig& config, ForwardMode mode,
                     std::vector<double>* activation_max) {
  config.validate();
  const auto plan = segnet_layer_plan(config);
  if (params.convs.size() != plan.size()) throw std::invalid_argument("segnet: parameter count does not match config");
  if (x.rank() != 3 || x.dim(0) != config.in_channels) {
    throw std::invalid_argument("segnet: expected input " + std::to_string(config.in_channels) + " x H x W, got " +
                                shape_string(x.shape()));
  }
  const Index m = config.spatial_multiple();
  if (x.dim(1) % m != 0 || x.dim(2) % m != 0) {
    throw std::invalid_argument("segnet: H and W must be divisible by " + std::to_string(m) + ", got " +
                                shape_string(x.shape()));
  }
  const QuantScales* scales = nullptr;
  if (mode == ForwardMode::Quantized) {
    if (!params.scales) throw std::invalid_argument("segnet_forward_quantized: missing calibration scales");
    scales = &*params.scales;
    if (scales->weight.size() != plan.size() || scales->activation.size() + 1 != plan.size()) {
      throw std::invalid_argument("segnet_forward_quantized: calibration does not match the layer plan");
    }
  }
  if (activation_max != nullptr) activation_max->assign(plan.size() - 1, 0.0);

  Tensor<T> h = x;
  std::size_t act = 0;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const ConvLayerInfo& layer = plan[i];
    if (layer.upsample_before) h = upsample_nearest_2x(h);
    Tensor<T> w = params.convs[i].weight;
    if (scales != nullptr) {
      w = fake_quantize(w, QuantSpec{layer.weight_bits, QuantMode::SymmetricWeight, scales->weight[i]});
    }
    h = conv2d_3x3_same(h, w, params.convs[i].bias);
    if (layer.relu) {
      h = relu(h);
      if (activation_max != nullptr) {
        (*activation_max)[act] = std::max((*activation_max)[act], static_cast<double>(h.values().maxCoeff()));
      }
      if (scales != nullptr) h = fake_quantize(h, QuantSpec{4, QuantMode::UnsignedActivation, scales->activation[act]});
      ++act;
    }
    if (layer.pool_after) h = maxpool_2x2(h);
  }
  return h;
}

}  // namespace

template <typename T>
Tensor<T> segnet_forward(const Tensor<T>& x, const SegNetParams<T>& params, const SegNetConfig& config) {
  return run_segnet(x, params, config, ForwardMode::Float, nullptr);
}

template <typename T>
Tensor<T> segnet_forward_quantized(const Tensor<T>& x, const SegNetParams<T>& params, const SegNetConfig& config) {
  return run_segnet(x, params, config, ForwardMode::Quantized, nullptr);
}

template <typename T>
QuantScales calibrate_segnet(const SegNetParams<T>& params, const SegNetConfig& config,
                             std::span<const Tensor<T>> inputs) {
  if (inputs.empty()) throw std::invalid_argument("calibrate_segnet: no calibration inputs");
  const auto plan = segnet_layer_plan(config);
  std::vector<double> running(plan.size() - 1, 0.0), seen;
  for (const auto& x : inputs) {
    run_segnet(x, params, config, ForwardMode::Calibrate, &seen);
    for (std::size_t i = 0; i < running.size(); ++i) running[i] = std::max(running[i], seen[i]);
  }
  QuantScales scales;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    scales.weight.push_back(weight_scale_max_abs(params.convs[i].weight, plan[i].weight_bits));
  }
  for (double m : running) scales.activation.push_back(activation_scale_from_max(m, 4));
  return scales;
}

template <typename T>
std::vector<Label> predict_classes(const Tensor<T>& logits) {
  if (logits.rank() != 3) throw std::invalid_argument("predict_classes: logits must be K x H x W");
  const Index k = logits.dim(0), pixels = logits.dim(1) * logits.dim(2);
  std::vector<Label> labels(static_cast<std::size_t>(pixels), 0);
  const T* v = logits.data();
  for (Index p = 0; p < pixels; ++p) {
    Index best = 0;
    for (Index c = 1; c < k; ++c) {
      if (v[c * pixels + p] > v[best * pixels + p]) best = c;
    }
    labels[static_cast<std::size_t>(p)] = static_cast<Label>(best);
  }
  return labels;
}

#define BANDFUSE_INSTANTIATE(T)                                                                                 \
  template struct SegNetParams<T>;                                                                              \
  template SegNetParams<T> init_segnet<T>(const SegNetConfig&, std::uint64_t, std::ostream*, Index, Index);      \
  template Tensor<T> segnet_forward(const Tensor<T>&, const SegNetParams<T>&, const SegNetConfig&);             \
  template Tensor<T> segnet_forward_quantized(const Tensor<T>&, const SegNetParams<T>&, const SegNetConfig&);   \
  template QuantScales calibrate_segnet(const SegNetParams<T>&, const SegNetConfig&, std::span<const Tensor<T>>); \
  template std::vector<Label> predict_classes(const Tensor<T>&);

BANDFUSE_INSTANTIATE(float)
BANDFUSE_INSTANTIATE(double)

#undef BANDFUSE_INSTANTIATE

template SegNetParams<double> SegNetParams<float>::cast<double>() const;
template SegNetParams<float> SegNetParams<double>::cast<float>() const;
template SegNetParams<float> SegNetParams<float>::cast<float>() const;

}  // namespace bandfuse
