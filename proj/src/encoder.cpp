#include "bandfuse/encoder.hpp"

#include "bandfuse/ops.hpp"
#include "kernels.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace bandfuse {

PaddingLevel padding_level_from_int(int level) {
  if (level < 1 || level > 3) throw std::invalid_argument("padding level must be 1, 2 or 3");
  return static_cast<PaddingLevel>(level);
}

void EncoderConfig::validate() const {
  descriptor.validate();
  auto positive = [](int v, const char* what) {
    if (v < 1) throw std::invalid_argument(std::string("EncoderConfig: ") + what + " must be >= 1");
  };
  positive(d_token, "d_token");
  positive(n_heads, "n_heads");
  positive(d_ffn, "d_ffn");
  positive(c_out, "c_out");
  if (n_layers < 0) throw std::invalid_argument("EncoderConfig: n_layers must be >= 0");
  if (d_token % n_heads != 0) throw std::invalid_argument("EncoderConfig: d_token must be divisible by n_heads");
  for (int w : expand_widths) positive(w, "expand width");
  for (int w : contract_widths) positive(w, "contract width");
  if (!(ln_eps > 0.0)) throw std::invalid_argument("EncoderConfig: ln_eps must be positive");
}

EncoderConfig EncoderConfig::original_size() {
  EncoderConfig c;
  c.descriptor.encoding_dims = 64;
  c.expand_widths = {128};
  c.d_token = 128;
  c.d_ffn = 384;
  c.contract_widths = {64};
  return c;
}

namespace {

constexpr Index kPixelChunk = 2048;

Index dense_count(Index in, Index out) { return in * out + out; }

template <typename T>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Dense<T> dense(Index in, Index out) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    return Dense<T>{uniform(Shape{in, out}, -bound, bound), Tensor<T>(Shape{out}, T(0))};
  }

  Tensor<T> uniform(Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    Array<T> v(shape_size(shape));
    for (Index i = 0; i < v.size(); ++i) v[i] = static_cast<T>(dist(rng_));
    return Tensor<T>(std::move(shape), std::move(v));
  }

 private:
  std::mt19937_64 rng_;
};

template <typename T>
void push_dense(std::vector<Tensor<T>>& out, const Dense<T>& d) {
  out.push_back(d.weight);
  out.push_back(d.bias);
}

template <typename T>
Tensor<T> mlp(Tensor<T> x, const std::vector<Dense<T>>& layers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = linear(x, layers[i].weight, layers[i].bias);
    if (i + 1 < layers.size()) x = relu(x);
  }
  return x;
}

template <typename U, typename T>
Dense<U> cast_dense(const Dense<T>& d) {
  return Dense<U>{d.weight.template cast<U>(), d.bias.template cast<U>()};
}

}  // namespace

Index encoder_parameter_count(const EncoderConfig& config) {
  config.validate();
  Index total = 0;
  Index in = config.descriptor.width();
  for (int w : config.expand_widths) {
    total += dense_count(in, w);
    in = w;
  }
  total += dense_count(in, config.d_token);
  const Index d = config.d_token;
  const Index per_layer = 4 * dense_count(d, d) + dense_count(d, config.d_ffn) + dense_count(config.d_ffn, d) + 4 * d;
  total += per_layer * config.n_layers;
  in = d;
  for (int w : config.contract_widths) {
    total += dense_count(in, w);
    in = w;
  }
  total += dense_count(in, config.c_out);
  if (config.output_block == OutputBlock::BandEmbedding) total += 3 * config.c_out;
  return total;
}

template <typename T>
std::vector<Tensor<T>> EncoderParams<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (const auto& d : expand) push_dense(out, d);
  for (const auto& l : layers) {
    push_dense(out, l.query);
    push_dense(out, l.key);
    push_dense(out, l.value);
    push_dense(out, l.output);
    push_dense(out, l.ffn_in);
    push_dense(out, l.ffn_out);
    out.push_back(l.norm1_gamma);
    out.push_back(l.norm1_beta);
    out.push_back(l.norm2_gamma);
    out.push_back(l.norm2_beta);
  }
  for (const auto& d : contract) push_dense(out, d);
  if (embedding) {
    out.push_back(embedding->alpha);
    out.push_back(embedding->beta);
    out.push_back(embedding->gamma);
  }
  return out;
}

template <typename T>
Index EncoderParams<T>::parameter_count() const {
  Index n = 0;
  for (const auto& p : parameters()) n += p.size();
  return n;
}

template <typename T>
template <typename U>
EncoderParams<U> EncoderParams<T>::cast() const {
  EncoderParams<U> out;
  for (const auto& d : expand) out.expand.push_back(cast_dense<U>(d));
  for (const auto& l : layers) {
    TransformerLayer<U> c;
    c.query = cast_dense<U>(l.query);
    c.key = cast_dense<U>(l.key);
    c.value = cast_dense<U>(l.value);
    c.output = cast_dense<U>(l.output);
    c.ffn_in = cast_dense<U>(l.ffn_in);
    c.ffn_out = cast_dense<U>(l.ffn_out);
    c.norm1_gamma = l.norm1_gamma.template cast<U>();
    c.norm1_beta = l.norm1_beta.template cast<U>();
    c.norm2_gamma = l.norm2_gamma.template cast<U>();
    c.norm2_beta = l.norm2_beta.template cast<U>();
    out.layers.push_back(std::move(c));
  }
  for (const auto& d : contract) out.contract.push_back(cast_dense<U>(d));
  if (embedding) {
    out.embedding = BandEmbeddingWeights<U>{embedding->alpha.template cast<U>(), embedding->beta.template cast<U>(),
                                            embedding->gamma.template cast<U>()};
  }
  return out;
}

template <typename T>
EncoderParams<T> init_encoder(const EncoderConfig& config, std::uint64_t seed) {
  config.validate();
  Initializer<T> init(seed);
  EncoderParams<T> p;
  Index in = config.descriptor.width();
  for (int w : config.expand_widths) {
    p.expand.push_back(init.dense(in, w));
    in = w;
  }
  p.expand.push_back(init.dense(in, config.d_token));

  const Index d = config.d_token;
  for (int l = 0; l < config.n_layers; ++l) {
    TransformerLayer<T> layer;
    layer.query = init.dense(d, d);
    layer.key = init.dense(d, d);
    layer.value = init.dense(d, d);
    layer.output = init.dense(d, d);
    layer.ffn_in = init.dense(d, config.d_ffn);
    layer.ffn_out = init.dense(config.d_ffn, d);
    layer.norm1_gamma = Tensor<T>(Shape{d}, T(1));
    layer.norm1_beta = Tensor<T>(Shape{d}, T(0));
    layer.norm2_gamma = Tensor<T>(Shape{d}, T(1));
    layer.norm2_beta = Tensor<T>(Shape{d}, T(0));
    p.layers.push_back(std::move(layer));
  }

  in = d;
  for (int w : config.contract_widths) {
    p.contract.push_back(init.dense(in, w));
    in = w;
  }
  p.contract.push_back(init.dense(in, config.c_out));

  if (config.output_block == OutputBlock::BandEmbedding) {
    const Index c = config.c_out;
    p.embedding = BandEmbeddingWeights<T>{init.uniform(Shape{c}, -M_PI, M_PI), init.uniform(Shape{c}, -1.0, 1.0),
                                          Tensor<T>(Shape{c}, T(0))};
  }
  return p;
}

template <typename T>
Tensor<T> expand_tokens(const Tensor<T>& descriptors, const EncoderParams<T>& params) {
  if (descriptors.rank() != 2 || params.expand.empty() || descriptors.dim(1) != params.expand.front().weight.dim(0)) {
    throw std::invalid_argument("expand_tokens: descriptor width mismatch, got " + shape_string(descriptors.shape()));
  }
  return mlp(descriptors, params.expand);
}

template <typename T>
Tensor<T> contract_features(const Tensor<T>& tokens, const EncoderParams<T>& params) {
  if (tokens.rank() != 2 || params.contract.empty() || tokens.dim(1) != params.contract.front().weight.dim(0)) {
    throw std::invalid_argument("contract_features: token width mismatch, got " + shape_string(tokens.shape()));
  }
  return mlp(tokens, params.contract);
}

template <typename T>
Tensor<T> fuse_attention(const Tensor<T>& tokens, const std::vector<bool>& validity, const EncoderParams<T>& params,
                         const EncoderConfig& config) {
  const Index n = tokens.dim(0), d = tokens.dim(1);
  if (d != config.d_token) throw std::invalid_argument("fuse_attention: token width mismatch");
  if (static_cast<Index>(validity.size()) != n) throw std::invalid_argument("fuse_attention: validity length mismatch");
  bool any = false;
  for (bool v : validity) any = any || v;
  if (!any) throw std::invalid_argument("fuse_attention: no valid tokens");

  const bool masked = config.padding_level == PaddingLevel::RealBandsMasked;
  const std::vector<bool> keys = masked ? validity : std::vector<bool>(validity.size(), true);
  const Index dh = d / config.n_heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));

  Tensor<T> x = tokens;
  for (const auto& layer : params.layers) {
    Tensor<T> q = linear(x, layer.query.weight, layer.query.bias);
    Tensor<T> k = linear(x, layer.key.weight, layer.key.bias);
    Tensor<T> v = linear(x, layer.value.weight, layer.value.bias);
    std::vector<Tensor<T>> heads;
    for (int h = 0; h < config.n_heads; ++h) {
      Tensor<T> qh = slice_cols(q, h * dh, dh);
      Tensor<T> kh = slice_cols(k, h * dh, dh);
      Tensor<T> vh = slice_cols(v, h * dh, dh);
      Tensor<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
      heads.push_back(matmul(masked_softmax(scores, keys), vh));
    }
    Tensor<T> attended = linear(concat_cols(heads), layer.output.weight, layer.output.bias);
    if (masked) attended = mask_rows(attended, validity);
    x = layer_norm(add(x, attended), layer.norm1_gamma, layer.norm1_beta, static_cast<T>(config.ln_eps));
    Tensor<T> ffn = linear(relu(linear(x, layer.ffn_in.weight, layer.ffn_in.bias)), layer.ffn_out.weight,
                           layer.ffn_out.bias);
    x = layer_norm(add(x, ffn), layer.norm2_gamma, layer.norm2_beta, static_cast<T>(config.ln_eps));
  }
  return x;
}

namespace {

Index count_valid(const std::vector<bool>& validity) {
  Index n = 0;
  for (bool v : validity) n += v ? 1 : 0;
  return n;
}

template <typename T>
void check_band_inputs(const char* op, const Tensor<T>& bands, const Tensor<T>& features,
                       const std::vector<bool>& validity) {
  if (bands.rank() != 3) throw std::invalid_argument(std::string(op) + ": bands must be B x H x W");
  if (features.rank() != 2 || features.dim(0) != bands.dim(0)) {
    throw std::invalid_argument(std::string(op) + ": features must be B x C with B matching the bands");
  }
  if (static_cast<Index>(validity.size()) != bands.dim(0)) {
    throw std::invalid_argument(std::string(op) + ": validity length mismatch");
  }
  if (count_valid(validity) == 0) throw std::invalid_argument(std::string(op) + ": no real bands");
}

}  // namespace

template <typename T>
Tensor<T> band_multiply_mean(const Tensor<T>& bands, const Tensor<T>& features, const std::vector<bool>& validity,
                             PaddingLevel level) {
  check_band_inputs("band_multiply_mean", bands, features, validity);
  const Index nb = bands.dim(0), h = bands.dim(1), w = bands.dim(2), hw = h * w, c = features.dim(1);
  const T pad = static_cast<T>(kPaddingValue);
  for (Index b = 0; b < nb; ++b) {
    if (validity[static_cast<std::size_t>(b)]) continue;
    const Eigen::Map<const Array<T>> plane(bands.data() + b * hw, hw);
    if ((plane != pad).any()) throw std::invalid_argument("band_multiply_mean: padding band is not -0.5");
  }
  const Index divisor = level == PaddingLevel::AllBands ? nb : count_valid(validity);
  const T inv = T(1) / static_cast<T>(divisor);

  // Pixel chunks keep the accumulators cache-resident; per element the
  // bands are still summed in order.
  Array<T> out(c * hw);
  for (Index p0 = 0; p0 < hw; p0 += kPixelChunk) {
    const Index n = std::min(kPixelChunk, hw - p0);
    for (Index ch = 0; ch < c; ++ch) Eigen::Map<Array<T>>(out.data() + ch * hw + p0, n).setZero();
    for (Index b = 0; b < nb; ++b) {
      const Eigen::Map<const Array<T>> x(bands.data() + b * hw + p0, n);
      for (Index ch = 0; ch < c; ++ch) {
        Eigen::Map<Array<T>>(out.data() + ch * hw + p0, n) += (x + T(0.5)) * features.values()[b * c + ch];
      }
    }
    for (Index ch = 0; ch < c; ++ch) Eigen::Map<Array<T>>(out.data() + ch * hw + p0, n) *= inv;
  }

  auto bn = bands.node(), fn = features.node();
  return detail::make_result<T>("band_multiply_mean", Shape{c, h, w}, std::move(out), {&bands, &features},
                                [bn, fn, nb, c, hw, inv](const Array<T>& g) {
                                  auto gy = kernels::as_matrix(g, c, hw);
                                  if (!fn->requires_grad) return;
                                  RowMatrix<T> shifted_all = kernels::as_matrix(bn->value, nb, hw).array() + T(0.5);
                                  RowMatrix<T> gf = shifted_all * gy.transpose() * inv;
                                  detail::accumulate(fn, kernels::as_array(gf));
                                });
}

template <typename T>
Tensor<T> band_embedding(const Tensor<T>& bands, const Tensor<T>& features, const std::vector<bool>& validity,
                         const BandEmbeddingWeights<T>& weights) {
  check_band_inputs("band_embedding", bands, features, validity);
  const Index nb = bands.dim(0), h = bands.dim(1), w = bands.dim(2), hw = h * w, c = features.dim(1);
  if (weights.alpha.size() != c || weights.beta.size() != c || weights.gamma.size() != c) {
    throw std::invalid_argument("band_embedding: weight width does not match feature width");
  }
  const T inv = T(1) / static_cast<T>(count_valid(validity));

  Array<T> out(c * hw);
  for (Index p0 = 0; p0 < hw; p0 += kPixelChunk) {
    const Index n = std::min(kPixelChunk, hw - p0);
    for (Index ch = 0; ch < c; ++ch) Eigen::Map<Array<T>>(out.data() + ch * hw + p0, n).setZero();
    for (Index b = 0; b < nb; ++b) {
      if (!validity[static_cast<std::size_t>(b)]) continue;
      const Eigen::Map<const Array<T>> x(bands.data() + b * hw + p0, n);
      for (Index ch = 0; ch < c; ++ch) {
        const T phase = weights.beta.values()[ch] * features.values()[b * c + ch] + weights.gamma.values()[ch];
        Eigen::Map<Array<T>>(out.data() + ch * hw + p0, n) += (x * weights.alpha.values()[ch] + phase).sin();
      }
    }
    for (Index ch = 0; ch < c; ++ch) Eigen::Map<Array<T>>(out.data() + ch * hw + p0, n) *= inv;
  }

  auto bn = bands.node(), fn = features.node();
  auto an = weights.alpha.node(), betan = weights.beta.node(), gn = weights.gamma.node();
  std::vector<bool> valid = validity;
  return detail::make_result<T>(
      "band_embedding", Shape{c, h, w}, std::move(out),
      {&bands, &features, &weights.alpha, &weights.beta, &weights.gamma},
      [bn, fn, an, betan, gn, valid, nb, c, hw, inv](const Array<T>& g) {
        auto gy = kernels::as_matrix(g, c, hw);
        Array<T> ga = Array<T>::Zero(c), gb = Array<T>::Zero(c), gg = Array<T>::Zero(c);
        Array<T> gf = Array<T>::Zero(nb * c);
        for (Index b = 0; b < nb; ++b) {
          if (!valid[static_cast<std::size_t>(b)]) continue;
          const Eigen::Map<const Array<T>> x(bn->value.data() + b * hw, hw);
          for (Index ch = 0; ch < c; ++ch) {
            const T f = fn->value[b * c + ch];
            const T phase = betan->value[ch] * f + gn->value[ch];
            const Array<T> dz = (x * an->value[ch] + phase).cos() * gy.row(ch).transpose().array() * inv;
            const T dz_sum = dz.sum();
            ga[ch] += (dz * x).sum();
            gb[ch] += dz_sum * f;
            gg[ch] += dz_sum;
            gf[b * c + ch] += dz_sum * betan->value[ch];
          }
        }
        detail::accumulate(an, ga);
        detail::accumulate(betan, gb);
        detail::accumulate(gn, gg);
        detail::accumulate(fn, gf);
      });
}

template <typename T>
Tensor<T> pad_bands(const Tensor<T>& bands, Index bmax) {
  if (bands.rank() != 3) throw std::invalid_argument("pad_bands: bands must be B x H x W");
  const Index b = bands.dim(0), hw = bands.dim(1) * bands.dim(2);
  if (bmax < b) throw std::invalid_argument("pad_bands: Bmax is smaller than the band count");
  Array<T> v(bmax * hw);
  v.head(b * hw) = bands.values();
  v.tail((bmax - b) * hw).setConstant(static_cast<T>(kPaddingValue));
  return Tensor<T>(Shape{bmax, bands.dim(1), bands.dim(2)}, std::move(v));
}

template <typename T>
Tensor<T> encoder_forward(const Tensor<T>& bands, std::span<const BandSpec> specs, Index n_real,
                          const EncoderParams<T>& params, const EncoderConfig& config) {
  DescriptorBatch<T> batch = build_descriptor_batch(specs, bands, n_real, config.descriptor);
  Tensor<T> tokens = expand_tokens(batch.descriptors, params);
  tokens = fuse_attention(tokens, batch.validity, params, config);
  Tensor<T> features = contract_features(tokens, params);
  if (config.output_block == OutputBlock::BandEmbedding) {
    if (!params.embedding) throw std::invalid_argument("encoder_forward: band embedding weights missing");
    return band_embedding(bands, features, batch.validity, *params.embedding);
  }
  return band_multiply_mean(bands, features, batch.validity, config.padding_level);
}

#define BANDFUSE_INSTANTIATE(T)                                                                                    \
  template struct EncoderParams<T>;                                                                                \
  template EncoderParams<T> init_encoder<T>(const EncoderConfig&, std::uint64_t);                                  \
  template Tensor<T> expand_tokens(const Tensor<T>&, const EncoderParams<T>&);                                     \
  template Tensor<T> fuse_attention(const Tensor<T>&, const std::vector<bool>&, const EncoderParams<T>&,           \
                                    const EncoderConfig&);                                                         \
  template Tensor<T> contract_features(const Tensor<T>&, const EncoderParams<T>&);                                 \
  template Tensor<T> band_multiply_mean(const Tensor<T>&, const Tensor<T>&, const std::vector<bool>&, PaddingLevel); \
  template Tensor<T> band_embedding(const Tensor<T>&, const Tensor<T>&, const std::vector<bool>&,                  \
                                    const BandEmbeddingWeights<T>&);                                               \
  template Tensor<T> pad_bands(const Tensor<T>&, Index);                                                           \
  template Tensor<T> encoder_forward(const Tensor<T>&, std::span<const BandSpec>, Index, const EncoderParams<T>&,   \
                                     const EncoderConfig&);

BANDFUSE_INSTANTIATE(float)
BANDFUSE_INSTANTIATE(double)

#undef BANDFUSE_INSTANTIATE

template EncoderParams<double> EncoderParams<float>::cast<double>() const;
template EncoderParams<float> EncoderParams<double>::cast<float>() const;
template EncoderParams<float> EncoderParams<float>::cast<float>() const;
template EncoderParams<double> EncoderParams<double>::cast<double>() const;

}  // namespace bandfuse
