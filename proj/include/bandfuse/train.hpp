#pragma once

#include "bandfuse/encoder.hpp"
#include "bandfuse/metrics.hpp"
#include "bandfuse/sample.hpp"
#include "bandfuse/segnet.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace bandfuse {

struct TrainConfig {
  double base_lr = 5e-4;
  double weight_decay = 5e-3;
  int batch_size = 8;
  int epochs = 5;
  int steps_per_epoch = 40;
  double warmup_epochs = 3.0;
  double final_lr_frac = 0.2;
  double warmup_start_frac = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  /// Band count every sample is padded to; 0 uses the widest tile.
  int max_bands = 0;
  bool random_band_subsets = true;
  bool augment = true;

  void validate() const;
  int total_steps() const { return epochs * steps_per_epoch; }
};

/// Linear warmup from warmup_start_frac * base to base over the warmup
/// epochs, then cosine annealing to final_lr_frac * base at `epochs`.
double lr_schedule(double epoch_progress, const TrainConfig& config);

// Raw annotation codes accepted by merge_shadow_to_clear.
enum class RawLabel : std::uint8_t { Clear = 0, Shadow = 1, Thin = 2, Thick = 3, Undefined = 4 };

/// Shadow -> Clear, Thick -> 1, Thin -> 2, Undefined -> 255.
std::vector<Label> merge_shadow_to_clear(std::span<const std::uint8_t> raw);

/// k uniform on {1..B}, then a uniform k-subset in ascending order.
std::vector<Index> sample_band_subset(Index band_count, std::mt19937_64& rng);

/// Dihedral element 0..7: rotate by 90 degrees (element % 4) times
/// counter-clockwise, then flip horizontally when element >= 4.
TileSample apply_dihedral(const TileSample& tile, int element);
/// Uniformly random dihedral element; square tiles only.
TileSample augment(const TileSample& tile, std::mt19937_64& rng);

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
struct AdamWState {
  std::vector<Array<T>> first_moment;
  std::vector<Array<T>> second_moment;
  std::int64_t step = 0;
};

/// Decoupled-weight-decay Adam. Parameters without a gradient are skipped.
template <typename T>
void adamw_step(std::span<const Tensor<T>> params, AdamWState<T>& state, double lr, const AdamWOptions& options);

/// Optional encoder in front of the segmentation network. Without an
/// encoder the network consumes the raw bands after u8 input quantization.
template <typename T>
struct Model {
  std::optional<EncoderConfig> encoder_config;
  std::optional<EncoderParams<T>> encoder;
  SegNetConfig segnet_config;
  SegNetParams<T> segnet;

  std::vector<Tensor<T>> parameters() const;
};

template <typename T>
Model<T> make_model(const std::optional<EncoderConfig>& encoder_config, SegNetConfig segnet_config,
                    std::uint64_t seed);

/// Input of the segmentation network for one tile padded to `bmax` bands.
template <typename T>
Tensor<T> segnet_input(const Model<T>& model, const TileSample& tile, Index bmax);

template <typename T>
Tensor<T> model_forward(const Model<T>& model, const TileSample& tile, Index bmax, bool quantized = false);

/// One optimizer step on `batch`: forward, mean cross-entropy, backward,
/// AdamW. Returns the batch loss.
template <typename T>
double train_step(std::span<const TileSample> batch, Model<T>& model, AdamWState<T>& state, const TrainConfig& config,
                  double lr, Index bmax, bool quantized = false);

struct EvalOptions {
  Index bmax = 0;
  bool quantized = false;
  /// Evaluate on this band subset of every tile instead of all bands.
  std::optional<std::vector<Index>> bands;
};

template <typename T>
ConfusionMatrix evaluate(const Model<T>& model, std::span<const TileSample> tiles, const EvalOptions& options);

struct TrainResult {
  std::vector<double> losses;
  std::vector<double> validation_miou;  // per epoch, when validating
  int best_epoch = -1;
};

/// Runs config.total_steps() steps of random batches with band subsets and
/// augmentation. With `validation`, keeps the parameters of the epoch with
/// the best validation mIoU.
template <typename T>
TrainResult train(Model<T>& model, std::span<const TileSample> data, const TrainConfig& config,
                  std::span<const TileSample> validation = {},
                  const std::function<void(int, double)>& on_step = nullptr);

/// Fills model.segnet.scales from the tiles' network inputs.
template <typename T>
void calibrate_model(Model<T>& model, std::span<const TileSample> tiles, Index bmax);

/// Quantization-aware fine-tuning: calibrates, then trains `steps` steps
/// through the fake-quantized forward pass, refreshing weight scales each
/// step.
template <typename T>
std::vector<double> quantization_aware_finetune(Model<T>& model, std::span<const TileSample> data,
                                                const TrainConfig& config, int steps, double lr);

Index widest_tile(std::span<const TileSample> tiles);

}  // namespace bandfuse
