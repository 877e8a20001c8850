#include "bandfuse/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bandfuse {

namespace {

struct Out {
  std::ofstream s;
  explicit Out(const std::filesystem::path& p) : s(p, std::ios::binary) {
    if (!s) throw std::runtime_error("cannot open " + p.string() + " for writing");
  }
  void u32(std::uint32_t v) { s.write(reinterpret_cast<const char*>(&v), 4); }
  void f32(float v) { s.write(reinterpret_cast<const char*>(&v), 4); }
  void tensor(const Tensor<float>& t) {
    u32(static_cast<std::uint32_t>(t.rank()));
    for (Index d : t.shape()) u32(static_cast<std::uint32_t>(d));
    s.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.size() * 4));
  }
};

struct In {
  std::filesystem::path path;
  std::ifstream s;
  explicit In(const std::filesystem::path& p) : path(p), s(p, std::ios::binary) {
    if (!s) throw std::runtime_error("cannot open " + p.string());
  }
  void read(void* dst, std::size_t n) {
    s.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(s.gcount()) != n) throw std::invalid_argument(path.string() + ": truncated checkpoint");
  }
  std::uint32_t u32() {
    std::uint32_t v;
    read(&v, 4);
    return v;
  }
  float f32() {
    float v;
    read(&v, 4);
    return v;
  }
  void magic(const char* m) {
    char b[4];
    read(b, 4);
    if (std::memcmp(b, m, 4) != 0) throw std::invalid_argument(path.string() + ": bad magic, expected " + m);
    if (u32() != 1) throw std::invalid_argument(path.string() + ": unsupported version");
  }
  // Reads the next tensor and checks it matches `expected`'s shape.
  Tensor<float> tensor(const Tensor<float>& expected) {
    const std::uint32_t rank = u32();
    Shape shape;
    for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(u32());
    if (shape != expected.shape()) {
      throw std::invalid_argument(path.string() + ": tensor shape " + shape_string(shape) + " does not match config " +
                                  shape_string(expected.shape()));
    }
    Array<float> v(shape_size(shape));
    read(v.data(), static_cast<std::size_t>(v.size()) * 4);
    return Tensor<float>(shape, std::move(v));
  }
  void end() {
    if (s.peek() != std::char_traits<char>::eof()) throw std::invalid_argument(path.string() + ": trailing bytes");
  }
};

void copy_into(Tensor<float> dst, const Tensor<float>& src) { dst.mutable_values() = src.values(); }

}  // namespace

void save_segnet(const std::filesystem::path& path, const SegNetParams<float>& params, const SegNetConfig& config) {
  Out o(path);
  o.s.write("SGN1", 4);
  o.u32(1);
  o.u32(static_cast<std::uint32_t>(config.in_channels));
  o.u32(static_cast<std::uint32_t>(config.base_channels));
  o.u32(static_cast<std::uint32_t>(config.n_stages));
  o.u32(static_cast<std::uint32_t>(config.n_classes));
  const bool quantized = params.scales.has_value();
  o.u32(quantized ? 1 : 0);
  const auto tensors = params.parameters();
  o.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) o.tensor(t);
  if (quantized) {
    o.u32(static_cast<std::uint32_t>(params.scales->weight.size()));
    for (double s : params.scales->weight) o.f32(static_cast<float>(s));
    for (double s : params.scales->activation) o.f32(static_cast<float>(s));
  }
  o.s.flush();
  if (!o.s) throw std::runtime_error("write failed for " + path.string());
}

void load_segnet(const std::filesystem::path& path, SegNetParams<float>& params, SegNetConfig& config) {
  In in(path);
  in.magic("SGN1");
  SegNetConfig c;
  c.in_channels = static_cast<int>(in.u32());
  c.base_channels = static_cast<int>(in.u32());
  c.n_stages = static_cast<int>(in.u32());
  c.n_classes = static_cast<int>(in.u32());
  c.quantized = in.u32() != 0;
  SegNetParams<float> p = init_segnet<float>(c, 0);
  const auto slots = p.parameters();
  if (in.u32() != slots.size()) throw std::invalid_argument(path.string() + ": tensor count does not match config");
  for (const auto& slot : slots) copy_into(slot, in.tensor(slot));
  if (c.quantized) {
    const std::uint32_t layers = in.u32();
    if (layers != p.convs.size()) throw std::invalid_argument(path.string() + ": scale count does not match config");
    QuantScales s;
    for (std::uint32_t i = 0; i < layers; ++i) s.weight.push_back(in.f32());
    for (std::uint32_t i = 0; i + 1 < layers; ++i) s.activation.push_back(in.f32());
    p.scales = std::move(s);
  }
  in.end();
  params = std::move(p);
  config = c;
}

void save_encoder(const std::filesystem::path& path, const EncoderParams<float>& params, const EncoderConfig& config) {
  config.validate();
  Out o(path);
  o.s.write("ENC1", 4);
  o.u32(1);
  o.u32(static_cast<std::uint32_t>(config.descriptor.encoding_dims));
  o.u32(static_cast<std::uint32_t>(config.descriptor.encoding));
  o.u32(static_cast<std::uint32_t>(config.descriptor.stats));
  o.u32(static_cast<std::uint32_t>(config.d_token));
  o.u32(static_cast<std::uint32_t>(config.n_layers));
  o.u32(static_cast<std::uint32_t>(config.n_heads));
  o.u32(static_cast<std::uint32_t>(config.d_ffn));
  o.u32(static_cast<std::uint32_t>(config.c_out));
  o.u32(static_cast<std::uint32_t>(config.padding_level));
  o.u32(static_cast<std::uint32_t>(config.output_block));
  o.u32(static_cast<std::uint32_t>(config.expand_widths.size()));
  for (int w : config.expand_widths) o.u32(static_cast<std::uint32_t>(w));
  o.u32(static_cast<std::uint32_t>(config.contract_widths.size()));
  for (int w : config.contract_widths) o.u32(static_cast<std::uint32_t>(w));
  const auto tensors = params.parameters();
  o.u32(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) o.tensor(t);
  o.s.flush();
  if (!o.s) throw std::runtime_error("write failed for " + path.string());
}

void load_encoder(const std::filesystem::path& path, EncoderParams<float>& params, EncoderConfig& config) {
  In in(path);
  in.magic("ENC1");
  EncoderConfig c;
  c.descriptor.encoding_dims = static_cast<int>(in.u32());
  const std::uint32_t encoding = in.u32(), stats = in.u32();
  if (encoding > 1 || stats > 1) throw std::invalid_argument(path.string() + ": unknown descriptor variant");
  c.descriptor.encoding = static_cast<EncodingVariant>(encoding);
  c.descriptor.stats = static_cast<StatsVariant>(stats);
  c.d_token = static_cast<int>(in.u32());
  c.n_layers = static_cast<int>(in.u32());
  c.n_heads = static_cast<int>(in.u32());
  c.d_ffn = static_cast<int>(in.u32());
  c.c_out = static_cast<int>(in.u32());
  c.padding_level = padding_level_from_int(static_cast<int>(in.u32()));
  const std::uint32_t block = in.u32();
  if (block > 1) throw std::invalid_argument(path.string() + ": unknown output block");
  c.output_block = static_cast<OutputBlock>(block);
  const std::uint32_t n_expand = in.u32();
  if (n_expand > 64) throw std::invalid_argument(path.string() + ": implausible layer count");
  c.expand_widths.clear();
  for (std::uint32_t i = 0; i < n_expand; ++i) c.expand_widths.push_back(static_cast<int>(in.u32()));
  const std::uint32_t n_contract = in.u32();
  if (n_contract > 64) throw std::invalid_argument(path.string() + ": implausible layer count");
  c.contract_widths.clear();
  for (std::uint32_t i = 0; i < n_contract; ++i) c.contract_widths.push_back(static_cast<int>(in.u32()));
  c.validate();

  EncoderParams<float> p = init_encoder<float>(c, 0);
  const auto slots = p.parameters();
  if (in.u32() != slots.size()) throw std::invalid_argument(path.string() + ": tensor count does not match config");
  for (const auto& slot : slots) copy_into(slot, in.tensor(slot));
  in.end();
  params = std::move(p);
  config = c;
}

}  // namespace bandfuse
