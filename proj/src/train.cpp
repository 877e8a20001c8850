#include "bandfuse/train.hpp"

#include "bandfuse/io.hpp"
#include "bandfuse/quantize.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace bandfuse {

void TrainConfig::validate() const {
  if (!(base_lr >= 0.0)) throw std::invalid_argument("TrainConfig: base_lr must be >= 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (steps_per_epoch < 1) throw std::invalid_argument("TrainConfig: steps_per_epoch must be >= 1");
  if (!(warmup_epochs >= 0.0)) throw std::invalid_argument("TrainConfig: warmup_epochs must be >= 0");
  if (!(static_cast<double>(epochs) > warmup_epochs)) {
    throw std::invalid_argument("TrainConfig: epochs must exceed warmup_epochs");
  }
  if (!(final_lr_frac > 0.0 && final_lr_frac <= 1.0)) throw std::invalid_argument("TrainConfig: final_lr_frac must be in (0, 1]");
  if (!(warmup_start_frac > 0.0 && warmup_start_frac <= 1.0)) {
    throw std::invalid_argument("TrainConfig: warmup_start_frac must be in (0, 1]");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("TrainConfig: betas must be in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw std::invalid_argument("TrainConfig: adam_eps must be > 0");
  if (max_bands < 0) throw std::invalid_argument("TrainConfig: max_bands must be >= 0");
}

double lr_schedule(double epoch_progress, const TrainConfig& config) {
  if (!(epoch_progress >= 0.0)) throw std::invalid_argument("lr_schedule: negative progress");
  const double base = config.base_lr;
  if (epoch_progress < config.warmup_epochs) {
    const double f = epoch_progress / config.warmup_epochs;
    return base * (config.warmup_start_frac + (1.0 - config.warmup_start_frac) * f);
  }
  const double span = config.epochs - config.warmup_epochs;
  const double tau = span > 0.0 ? std::min(1.0, (epoch_progress - config.warmup_epochs) / span) : 1.0;
  const double end = base * config.final_lr_frac;
  return end + (base - end) * 0.5 * (1.0 + std::cos(std::numbers::pi * tau));
}

std::vector<Label> merge_shadow_to_clear(std::span<const std::uint8_t> raw) {
  std::vector<Label> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    switch (static_cast<RawLabel>(raw[i])) {
      case RawLabel::Clear:
      case RawLabel::Shadow: out[i] = static_cast<Label>(CloudClass::Clear); break;
      case RawLabel::Thin: out[i] = static_cast<Label>(CloudClass::ThinCloud); break;
      case RawLabel::Thick: out[i] = static_cast<Label>(CloudClass::ThickCloud); break;
      case RawLabel::Undefined: out[i] = kIgnoreLabel; break;
      default: throw std::invalid_argument("merge_shadow_to_clear: unknown raw label " + std::to_string(raw[i]));
    }
  }
  return out;
}

std::vector<Index> sample_band_subset(Index band_count, std::mt19937_64& rng) {
  if (band_count < 1) throw std::invalid_argument("sample_band_subset: need at least one band");
  std::uniform_int_distribution<Index> pick_k(1, band_count);
  const Index k = pick_k(rng);
  std::vector<Index> all(static_cast<std::size_t>(band_count));
  std::iota(all.begin(), all.end(), Index{0});
  std::vector<Index> chosen;
  std::sample(all.begin(), all.end(), std::back_inserter(chosen), k, rng);
  return chosen;
}

TileSample apply_dihedral(const TileSample& tile, int element) {
  if (element < 0 || element > 7) throw std::invalid_argument("apply_dihedral: element must be in [0, 7]");
  const Index n = tile.height();
  if (tile.width() != n) throw std::invalid_argument("apply_dihedral: tile must be square");
  const Index plane = n * n;
  std::vector<Index> src(static_cast<std::size_t>(plane)), next(src.size());
  std::iota(src.begin(), src.end(), Index{0});
  for (int r = 0; r < element % 4; ++r) {
    for (Index y = 0; y < n; ++y)
      for (Index x = 0; x < n; ++x) next[static_cast<std::size_t>(y * n + x)] = src[static_cast<std::size_t>(x * n + (n - 1 - y))];
    src.swap(next);
  }
  if (element >= 4) {
    for (Index y = 0; y < n; ++y)
      for (Index x = 0; x < n; ++x) next[static_cast<std::size_t>(y * n + x)] = src[static_cast<std::size_t>(y * n + (n - 1 - x))];
    src.swap(next);
  }

  TileSample out;
  out.specs = tile.specs;
  const Index b = tile.band_count();
  Array<float> v(b * plane);
  const float* in = tile.bands.data();
  for (Index band = 0; band < b; ++band)
    for (Index p = 0; p < plane; ++p) v[band * plane + p] = in[band * plane + src[static_cast<std::size_t>(p)]];
  out.bands = Tensor<float>(tile.bands.shape(), std::move(v));
  if (tile.mask) {
    out.mask.emplace(static_cast<std::size_t>(plane));
    for (Index p = 0; p < plane; ++p) (*out.mask)[static_cast<std::size_t>(p)] = (*tile.mask)[static_cast<std::size_t>(src[static_cast<std::size_t>(p)])];
  }
  return out;
}

TileSample augment(const TileSample& tile, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, 7);
  return apply_dihedral(tile, pick(rng));
}

template <typename T>
void adamw_step(std::span<const Tensor<T>> params, AdamWState<T>& state, double lr, const AdamWOptions& options) {
  if (state.first_moment.empty() && state.step == 0) {
    for (const auto& p : params) {
      state.first_moment.push_back(Array<T>::Zero(p.size()));
      state.second_moment.push_back(Array<T>::Zero(p.size()));
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adamw_step: optimizer state does not match the parameter list");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(options.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(options.beta2, static_cast<double>(state.step));
  const T b1 = static_cast<T>(options.beta1), b2 = static_cast<T>(options.beta2);
  const T decay = static_cast<T>(1.0 - lr * options.weight_decay);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_bc2 = static_cast<T>(1.0 / bc2);
  const T eps = static_cast<T>(options.eps);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Array<T>* g = params[i].grad();
    if (g == nullptr) continue;
    Array<T>& m = state.first_moment[i];
    Array<T>& v = state.second_moment[i];
    if (m.size() != g->size()) throw std::invalid_argument("adamw_step: parameter size changed");
    Array<T>& theta = Tensor<T>(params[i]).mutable_values();
    theta *= decay;
    m = b1 * m + (T(1) - b1) * *g;
    v = b2 * v + (T(1) - b2) * g->square();
    theta -= step_size * m / ((v * inv_bc2).sqrt() + eps);
  }
}

template <typename T>
std::vector<Tensor<T>> Model<T>::parameters() const {
  std::vector<Tensor<T>> out;
  if (encoder) out = encoder->parameters();
  for (auto& p : segnet.parameters()) out.push_back(p);
  return out;
}

template <typename T>
Model<T> make_model(const std::optional<EncoderConfig>& encoder_config, SegNetConfig segnet_config,
                    std::uint64_t seed) {
  Model<T> model;
  if (encoder_config) {
    encoder_config->validate();
    segnet_config.in_channels = encoder_config->c_out;
    model.encoder_config = encoder_config;
    model.encoder = init_encoder<T>(*encoder_config, seed);
  }
  model.segnet_config = segnet_config;
  model.segnet = init_segnet<T>(segnet_config, seed + 1);
  return model;
}

template <typename T>
Tensor<T> segnet_input(const Model<T>& model, const TileSample& tile, Index bmax) {
  if (model.encoder) {
    if (bmax < tile.band_count()) {
      throw std::invalid_argument("tile has " + std::to_string(tile.band_count()) + " bands, more than Bmax=" +
                                  std::to_string(bmax));
    }
    Tensor<T> padded = pad_bands(tile.bands.cast<T>(), bmax);
    return encoder_forward(padded, std::span<const BandSpec>(tile.specs), tile.band_count(), *model.encoder,
                           *model.encoder_config);
  }
  if (tile.band_count() != model.segnet_config.in_channels) {
    throw std::invalid_argument("tile has " + std::to_string(tile.band_count()) + " bands, network expects " +
                                std::to_string(model.segnet_config.in_channels));
  }
  return quantize_input_u8(tile.bands).values.cast<T>();
}

template <typename T>
Tensor<T> model_forward(const Model<T>& model, const TileSample& tile, Index bmax, bool quantized) {
  Tensor<T> x = segnet_input(model, tile, bmax);
  return quantized ? segnet_forward_quantized(x, model.segnet, model.segnet_config)
                   : segnet_forward(x, model.segnet, model.segnet_config);
}

template <typename T>
double train_step(std::span<const TileSample> batch, Model<T>& model, AdamWState<T>& state, const TrainConfig& config,
                  double lr, Index bmax, bool quantized) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");
  std::vector<Tensor<T>> params = model.parameters();
  for (auto& p : params) {
    p.set_requires_grad(true);
    p.clear_grad();
  }
  double loss_value = 0.0;
  {
    GradTape<T> tape;
    Tensor<T> total;
    for (const auto& tile : batch) {
      if (!tile.mask) throw std::invalid_argument("train_step: tile without labels");
      Tensor<T> l = cross_entropy_mean(model_forward(model, tile, bmax, quantized), std::span<const Label>(*tile.mask));
      total = total.defined() ? add(total, l) : l;
    }
    Tensor<T> loss = scale(total, static_cast<T>(1.0 / static_cast<double>(batch.size())));
    tape.backward(loss);
    loss_value = static_cast<double>(loss.item());
  }
  AdamWOptions opts{config.beta1, config.beta2, config.adam_eps, config.weight_decay};
  adamw_step(std::span<const Tensor<T>>(params), state, lr, opts);
  for (auto& p : params) p.clear_grad();
  return loss_value;
}

Index widest_tile(std::span<const TileSample> tiles) {
  Index b = 0;
  for (const auto& t : tiles) b = std::max(b, t.band_count());
  return b;
}

template <typename T>
ConfusionMatrix evaluate(const Model<T>& model, std::span<const TileSample> tiles, const EvalOptions& options) {
  ConfusionMatrix cm(model.segnet_config.n_classes);
  const Index bmax = options.bmax > 0 ? options.bmax : widest_tile(tiles);
  for (const auto& tile : tiles) {
    if (!tile.mask) throw std::invalid_argument("evaluate: tile without labels");
    const TileSample view = options.bands ? tile.select_bands(*options.bands) : tile;
    const auto predicted = predict_classes(model_forward(model, view, bmax, options.quantized));
    update_confusion(cm, predicted, *tile.mask);
  }
  return cm;
}

namespace {

template <typename T>
std::vector<TileSample> draw_batch(const Model<T>& model, std::span<const TileSample> data, const TrainConfig& config,
                                   std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, data.size() - 1);
  std::vector<TileSample> batch;
  for (int i = 0; i < config.batch_size; ++i) {
    TileSample tile = data[pick(rng)];
    if (config.random_band_subsets && model.encoder) tile = tile.select_bands(sample_band_subset(tile.band_count(), rng));
    if (config.augment && tile.height() == tile.width()) tile = augment(tile, rng);
    batch.push_back(std::move(tile));
  }
  return batch;
}

template <typename T>
Index resolve_bmax(const TrainConfig& config, std::span<const TileSample> data) {
  const Index widest = widest_tile(data);
  if (config.max_bands > 0 && config.max_bands < widest) {
    throw std::invalid_argument("max_bands is smaller than the widest training tile");
  }
  return config.max_bands > 0 ? config.max_bands : widest;
}

}  // namespace

template <typename T>
TrainResult train(Model<T>& model, std::span<const TileSample> data, const TrainConfig& config,
                  std::span<const TileSample> validation, const std::function<void(int, double)>& on_step) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("train: empty training set");
  const Index bmax = resolve_bmax<T>(config, data);
  std::mt19937_64 rng(config.seed);
  AdamWState<T> state;
  TrainResult result;
  std::vector<Array<T>> best;
  double best_miou = -1.0;
  for (int step = 0; step < config.total_steps(); ++step) {
    const double lr = lr_schedule(static_cast<double>(step) / config.steps_per_epoch, config);
    const auto batch = draw_batch(model, data, config, rng);
    const double loss = train_step(std::span<const TileSample>(batch), model, state, config, lr, bmax);
    result.losses.push_back(loss);
    if (on_step) on_step(step, loss);
    if (!validation.empty() && (step + 1) % config.steps_per_epoch == 0) {
      const double miou = class_metrics(evaluate(model, validation, EvalOptions{bmax, false, std::nullopt})).miou;
      result.validation_miou.push_back(miou);
      if (miou > best_miou) {
        best_miou = miou;
        result.best_epoch = static_cast<int>(result.validation_miou.size()) - 1;
        best.clear();
        for (const auto& p : model.parameters()) best.push_back(p.values());
      }
    }
  }
  if (!best.empty()) {
    auto params = model.parameters();
    for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_values() = best[i];
  }
  return result;
}

template <typename T>
void calibrate_model(Model<T>& model, std::span<const TileSample> tiles, Index bmax) {
  std::vector<Tensor<T>> inputs;
  for (const auto& tile : tiles) inputs.push_back(segnet_input(model, tile, bmax));
  model.segnet.scales = calibrate_segnet(model.segnet, model.segnet_config, std::span<const Tensor<T>>(inputs));
}

template <typename T>
std::vector<double> quantization_aware_finetune(Model<T>& model, std::span<const TileSample> data,
                                                const TrainConfig& config, int steps, double lr) {
  config.validate();
  if (data.empty()) throw std::invalid_argument("quantization_aware_finetune: empty training set");
  if (steps < 0) throw std::invalid_argument("quantization_aware_finetune: negative step count");
  const Index bmax = resolve_bmax<T>(config, data);
  calibrate_model(model, data.first(std::min<std::size_t>(data.size(), 32)), bmax);
  const auto plan = segnet_layer_plan(model.segnet_config);
  std::mt19937_64 rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  AdamWState<T> state;
  std::vector<double> losses;
  const auto calibration = data.first(std::min<std::size_t>(data.size(), 32));
  for (int step = 0; step < steps; ++step) {
    // Activation ranges drift as the weights adapt to the quantized grid.
    if (step > 0 && step % 10 == 0) calibrate_model(model, calibration, bmax);
    for (std::size_t i = 0; i < plan.size(); ++i) {
      model.segnet.scales->weight[i] = weight_scale_max_abs(model.segnet.convs[i].weight, plan[i].weight_bits);
    }
    const auto batch = draw_batch(model, data, config, rng);
    losses.push_back(train_step(std::span<const TileSample>(batch), model, state, config, lr, bmax, true));
  }
  for (std::size_t i = 0; i < plan.size(); ++i) {
    model.segnet.scales->weight[i] = weight_scale_max_abs(model.segnet.convs[i].weight, plan[i].weight_bits);
  }
  return losses;
}

#define BANDFUSE_INSTANTIATE(T)                                                                                  \
  template void adamw_step(std::span<const Tensor<T>>, AdamWState<T>&, double, const AdamWOptions&);            \
  template struct Model<T>;                                                                                      \
  template Model<T> make_model<T>(const std::optional<EncoderConfig>&, SegNetConfig, std::uint64_t);             \
  template Tensor<T> segnet_input(const Model<T>&, const TileSample&, Index);                                    \
  template Tensor<T> model_forward(const Model<T>&, const TileSample&, Index, bool);                             \
  template double train_step(std::span<const TileSample>, Model<T>&, AdamWState<T>&, const TrainConfig&, double, \
                             Index, bool);                                                                       \
  template ConfusionMatrix evaluate(const Model<T>&, std::span<const TileSample>, const EvalOptions&);           \
  template TrainResult train(Model<T>&, std::span<const TileSample>, const TrainConfig&,                         \
                             std::span<const TileSample>, const std::function<void(int, double)>&);              \
  template void calibrate_model(Model<T>&, std::span<const TileSample>, Index);                                  \
  template std::vector<double> quantization_aware_finetune(Model<T>&, std::span<const TileSample>,               \
                                                           const TrainConfig&, int, double);

BANDFUSE_INSTANTIATE(float)
BANDFUSE_INSTANTIATE(double)

#undef BANDFUSE_INSTANTIATE

}  // namespace bandfuse
