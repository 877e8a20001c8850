#pragma once

#include "bandfuse/descriptor.hpp"
#include "bandfuse/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace bandfuse {

/// How padding bands are neutralized.
enum class PaddingLevel : int {
  AllBands = 1,         // mean over every band, padding included
  RealBands = 2,        // mean over real bands only
  RealBandsMasked = 3,  // RealBands plus an attention padding mask
};

enum class OutputBlock {
  BandMultiplication,  // (x + 0.5) * f_b, averaged over bands
  BandEmbedding,       // learnable sinusoidal pixel mapping
};

PaddingLevel padding_level_from_int(int level);

struct EncoderConfig {
  DescriptorOptions descriptor{};
  std::vector<int> expand_widths{48};
  int d_token = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ffn = 256;
  std::vector<int> contract_widths{32, 16};
  int c_out = 4;
  PaddingLevel padding_level = PaddingLevel::RealBandsMasked;
  OutputBlock output_block = OutputBlock::BandMultiplication;
  double ln_eps = 1e-5;

  void validate() const;

  /// Wider descriptor and body in the 355k-parameter class, without the
  /// expand-then-contract bottleneck.
  static EncoderConfig original_size();
};

template <typename T>
struct Dense {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]
};

template <typename T>
struct TransformerLayer {
  Dense<T> query, key, value, output;
  Dense<T> ffn_in, ffn_out;
  Tensor<T> norm1_gamma, norm1_beta;
  Tensor<T> norm2_gamma, norm2_beta;
};

template <typename T>
struct BandEmbeddingWeights {
  Tensor<T> alpha;  // reflectance frequency per channel
  Tensor<T> beta;   // feature-driven phase gain per channel
  Tensor<T> gamma;  // phase offset per channel
};

template <typename T>
struct EncoderParams {
  std::vector<Dense<T>> expand;
  std::vector<TransformerLayer<T>> layers;
  std::vector<Dense<T>> contract;
  std::optional<BandEmbeddingWeights<T>> embedding;

  /// Every trainable tensor in a fixed order (also the checkpoint order).
  std::vector<Tensor<T>> parameters() const;
  Index parameter_count() const;

  template <typename U>
  EncoderParams<U> cast() const;
};

/// He-uniform fan-in weights, zero biases, unit layer-norm gains.
template <typename T>
EncoderParams<T> init_encoder(const EncoderConfig& config, std::uint64_t seed);

/// Trainable parameter count implied by the layer shapes of `config`.
Index encoder_parameter_count(const EncoderConfig& config);

/// Per-band MLP: descriptors [B x width] -> tokens [B x d_token].
template <typename T>
Tensor<T> expand_tokens(const Tensor<T>& descriptors, const EncoderParams<T>& params);

/// Post-norm transformer layers over the band tokens. With
/// PaddingLevel::RealBandsMasked, invalid bands are dropped as keys and
/// their query rows receive no attention output.
template <typename T>
Tensor<T> fuse_attention(const Tensor<T>& tokens, const std::vector<bool>& validity, const EncoderParams<T>& params,
                         const EncoderConfig& config);

/// Per-band MLP: tokens [B x d_token] -> features [B x c_out].
template <typename T>
Tensor<T> contract_features(const Tensor<T>& tokens, const EncoderParams<T>& params);

/// sum_b (bands[b] + 0.5) * features[b, c] / divisor, where the divisor is
/// Bmax for PaddingLevel::AllBands and the real-band count otherwise.
template <typename T>
Tensor<T> band_multiply_mean(const Tensor<T>& bands, const Tensor<T>& features, const std::vector<bool>& validity,
                             PaddingLevel level);

/// out[c] = mean over real b of sin(alpha_c * x_b + beta_c * f_b[c] + gamma_c).
template <typename T>
Tensor<T> band_embedding(const Tensor<T>& bands, const Tensor<T>& features, const std::vector<bool>& validity,
                         const BandEmbeddingWeights<T>& weights);

/// Full encoder: descriptors, expansion, fusion, contraction, output block.
/// `bands` is [Bmax x H x W]; the first `n_real` rows are real bands.
template <typename T>
Tensor<T> encoder_forward(const Tensor<T>& bands, std::span<const BandSpec> specs, Index n_real,
                          const EncoderParams<T>& params, const EncoderConfig& config);

/// Appends padding bands (kPaddingValue) up to `bmax` rows.
template <typename T>
Tensor<T> pad_bands(const Tensor<T>& bands, Index bmax);

}  // namespace bandfuse
