#pragma once

#include "bandfuse/ops.hpp"
#include "bandfuse/tensor.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bandfuse {

struct SegNetConfig {
  int in_channels = 4;
  int base_channels = 8;
  int n_stages = 4;
  int n_classes = 3;
  bool quantized = false;

  void validate() const;
  /// Input height and width must be multiples of this.
  Index spatial_multiple() const { return Index{1} << n_stages; }
  /// Stage widths: encoder stages, bottleneck, decoder stages.
  std::vector<int> channel_schedule() const;
};

/// One 3x3 convolution of the layer chain.
struct ConvLayerInfo {
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  /// Resolution of this layer relative to the input (1, 2, 4, ...).
  int downscale = 1;
  bool pool_after = false;
  bool upsample_before = false;
  bool relu = true;
  /// Index of the layer whose output feeds this one; -1 is the network
  /// input. Every layer reads only its predecessor.
  int input_from = -1;
  int weight_bits = 4;

  /// Multiply-accumulates for an H x W network input.
  long long macs(Index height, Index width) const;
};

std::vector<ConvLayerInfo> segnet_layer_plan(const SegNetConfig& config);

/// Per-layer scales for the fake-quantized forward pass.
struct QuantScales {
  std::vector<double> weight;      // one per conv layer
  std::vector<double> activation;  // one per ReLU'd conv layer
};

template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // [Cout x Cin x 3 x 3]
  Tensor<T> bias;    // [Cout]
};

template <typename T>
struct SegNetParams {
  std::vector<ConvLayer<T>> convs;
  std::optional<QuantScales> scales;

  std::vector<Tensor<T>> parameters() const;
  Index parameter_count() const;

  template <typename U>
  SegNetParams<U> cast() const;
};

/// Seeded He-uniform initialization, zero biases and a zero head layer. Writes a per-layer parameter and MAC
/// table to `log` when given.
template <typename T>
SegNetParams<T> init_segnet(const SegNetConfig& config, std::uint64_t seed, std::ostream* log = nullptr,
                            Index log_height = 512, Index log_width = 512);

void write_segnet_report(std::ostream& os, const SegNetConfig& config, Index height, Index width);

/// Logits [n_classes x H x W] for input [in_channels x H x W].
template <typename T>
Tensor<T> segnet_forward(const Tensor<T>& x, const SegNetParams<T>& params, const SegNetConfig& config);

/// Same graph with fake-quantized weights (8-bit first and last layer,
/// 4-bit otherwise, symmetric) and 4-bit unsigned activations after every
/// ReLU. Needs `params.scales`.
template <typename T>
Tensor<T> segnet_forward_quantized(const Tensor<T>& x, const SegNetParams<T>& params, const SegNetConfig& config);

/// Weight scales from per-tensor max-abs; activation scales from the running
/// maximum of each ReLU output over `inputs`.
template <typename T>
QuantScales calibrate_segnet(const SegNetParams<T>& params, const SegNetConfig& config,
                             std::span<const Tensor<T>> inputs);

/// Per-pixel argmax; ties go to the lowest class index.
template <typename T>
std::vector<Label> predict_classes(const Tensor<T>& logits);

}  // namespace bandfuse
