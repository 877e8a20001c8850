#include "bandfuse/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bandfuse {

static_assert(std::endian::native == std::endian::little, "file formats assume a little-endian host");

void TileSample::validate() const {
  if (!bands.defined() || bands.rank() != 3) throw std::invalid_argument("TileSample: bands must be B x H x W");
  if (static_cast<Index>(specs.size()) != band_count()) {
    throw std::invalid_argument("TileSample: " + std::to_string(specs.size()) + " specs for " +
                                std::to_string(band_count()) + " bands");
  }
  for (const auto& s : specs) s.validate();
  if (mask) {
    if (static_cast<Index>(mask->size()) != height() * width()) {
      throw std::invalid_argument("TileSample: mask size does not match H x W");
    }
    for (Label l : *mask) {
      if (l > 2 && l != kIgnoreLabel) throw std::invalid_argument("TileSample: illegal mask value " + std::to_string(l));
    }
  }
}

TileSample TileSample::select_bands(const std::vector<Index>& indices) const {
  if (indices.empty()) throw std::invalid_argument("select_bands: empty selection");
  const Index hw = height() * width();
  Array<float> v(static_cast<Index>(indices.size()) * hw);
  TileSample out;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const Index b = indices[i];
    if (b < 0 || b >= band_count()) throw std::out_of_range("select_bands: band index out of range");
    v.segment(static_cast<Index>(i) * hw, hw) = bands.values().segment(b * hw, hw);
    out.specs.push_back(specs[static_cast<std::size_t>(b)]);
  }
  out.bands = Tensor<float>(Shape{static_cast<Index>(indices.size()), height(), width()}, std::move(v));
  out.mask = mask;
  return out;
}

double toa_landsat(std::int64_t dn) {
  if (dn < 0) throw std::invalid_argument("toa_landsat: negative DN");
  // (2 DN - 10000) / 100000 is the same affine map with a single rounding.
  return static_cast<double>(2 * dn - 10000) / 100000.0;
}

double toa_sentinel(std::int64_t dn) {
  if (dn < 0) throw std::invalid_argument("toa_sentinel: negative DN");
  return static_cast<double>(dn) / 10000.0;
}

std::vector<TileSample> tile_scene(const TileSample& scene, Index tile) {
  if (tile < 1) throw std::invalid_argument("tile_scene: tile size must be positive");
  const Index b = scene.band_count(), hs = scene.height(), ws = scene.width();
  if (hs < tile || ws < tile) throw std::invalid_argument("tile_scene: scene is smaller than one tile");
  std::vector<TileSample> tiles;
  for (Index ty = 0; ty < hs / tile; ++ty) {
    for (Index tx = 0; tx < ws / tile; ++tx) {
      Array<float> v(b * tile * tile);
      std::optional<std::vector<Label>> mask;
      if (scene.mask) mask.emplace(static_cast<std::size_t>(tile * tile));
      for (Index y = 0; y < tile; ++y) {
        const Index sy = ty * tile + y;
        for (Index band = 0; band < b; ++band) {
          v.segment((band * tile + y) * tile, tile) = scene.bands.values().segment((band * hs + sy) * ws + tx * tile, tile);
        }
        if (mask) {
          std::copy_n(scene.mask->begin() + sy * ws + tx * tile, tile, mask->begin() + y * tile);
        }
      }
      tiles.push_back(TileSample{Tensor<float>(Shape{b, tile, tile}, std::move(v)), scene.specs, std::move(mask)});
    }
  }
  return tiles;
}

QuantizedInput quantize_input_u8(const Tensor<float>& x) {
  QuantizedInput q;
  q.codes.resize(static_cast<std::size_t>(x.size()));
  Array<float> back(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double scaled = std::clamp(static_cast<double>(x[i]) * 255.0, 0.0, 255.0);
    const auto code = static_cast<std::uint8_t>(std::round(scaled));
    q.codes[static_cast<std::size_t>(i)] = code;
    back[i] = static_cast<float>(code) / 255.0f;
  }
  q.values = Tensor<float>(x.shape(), std::move(back));
  return q;
}

namespace {

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(std::uint32_t v) { bytes(&v, 4); }
  void f32(float v) { bytes(&v, 4); }
  void finish(const std::filesystem::path& path) {
    out_.flush();
    if (!out_) throw std::runtime_error("write failed for " + path.string());
  }

 private:
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw std::runtime_error("cannot open " + path.string());
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) {
      throw std::invalid_argument(path_.string() + ": truncated file");
    }
  }
  std::uint32_t u32() {
    std::uint32_t v;
    bytes(&v, 4);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
  void expect_magic(const char* magic) {
    char m[4];
    bytes(m, 4);
    if (std::memcmp(m, magic, 4) != 0) throw std::invalid_argument(path_.string() + ": bad magic, expected " + magic);
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw std::invalid_argument(path_.string() + ": trailing bytes");
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

}  // namespace

void write_mstf(const std::filesystem::path& path, const TileSample& tile) {
  tile.validate();
  Writer w(path);
  w.bytes("MST1", 4);
  w.u32(1);
  w.u32(static_cast<std::uint32_t>(tile.height()));
  w.u32(static_cast<std::uint32_t>(tile.width()));
  w.u32(static_cast<std::uint32_t>(tile.band_count()));
  for (const auto& s : tile.specs) {
    w.f32(static_cast<float>(s.lambda_min_nm));
    w.f32(static_cast<float>(s.lambda_max_nm));
  }
  w.bytes(tile.bands.data(), static_cast<std::size_t>(tile.bands.size()) * sizeof(float));
  w.finish(path);
}

TileSample read_mstf(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic("MST1");
  const std::uint32_t version = r.u32();
  if (version != 1) throw std::invalid_argument(path.string() + ": unsupported MSTF version " + std::to_string(version));
  const Index h = r.u32(), w = r.u32(), b = r.u32();
  if (h == 0 || w == 0 || b == 0) throw std::invalid_argument(path.string() + ": zero dimension in header");
  TileSample tile;
  for (Index i = 0; i < b; ++i) {
    const float lo = r.f32();
    const float hi = r.f32();
    if (lo > hi) throw std::invalid_argument(path.string() + ": lambda_min exceeds lambda_max");
    tile.specs.push_back(BandSpec{lo, hi});
  }
  Array<float> v(b * h * w);
  r.bytes(v.data(), static_cast<std::size_t>(v.size()) * sizeof(float));
  r.expect_end();
  tile.bands = Tensor<float>(Shape{b, h, w}, std::move(v));
  return tile;
}

void write_mask(const std::filesystem::path& path, const std::vector<Label>& labels, Index height, Index width) {
  if (static_cast<Index>(labels.size()) != height * width) throw std::invalid_argument("write_mask: size mismatch");
  for (Label l : labels) {
    if (l > 2 && l != kIgnoreLabel) throw std::invalid_argument("write_mask: illegal label " + std::to_string(l));
  }
  Writer w(path);
  w.bytes("MSK1", 4);
  w.u32(static_cast<std::uint32_t>(height));
  w.u32(static_cast<std::uint32_t>(width));
  w.bytes(labels.data(), labels.size());
  w.finish(path);
}

std::vector<Label> read_mask(const std::filesystem::path& path, Index* height, Index* width) {
  Reader r(path);
  r.expect_magic("MSK1");
  const Index h = r.u32(), w = r.u32();
  std::vector<Label> labels(static_cast<std::size_t>(h * w));
  r.bytes(labels.data(), labels.size());
  r.expect_end();
  for (Label l : labels) {
    if (l > 2 && l != kIgnoreLabel) throw std::invalid_argument(path.string() + ": illegal label " + std::to_string(l));
  }
  if (height) *height = h;
  if (width) *width = w;
  return labels;
}

void write_raw_f32(const std::filesystem::path& path, const Tensor<float>& t) {
  Writer w(path);
  w.bytes(t.data(), static_cast<std::size_t>(t.size()) * sizeof(float));
  w.finish(path);
}

std::vector<TileSample> read_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::invalid_argument(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> tiles;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.path().extension() == ".mstf") tiles.push_back(entry.path());
  }
  std::sort(tiles.begin(), tiles.end());
  std::vector<TileSample> out;
  for (const auto& p : tiles) {
    TileSample t = read_mstf(p);
    auto mask_path = p;
    mask_path.replace_extension(".msk");
    if (std::filesystem::exists(mask_path)) {
      Index h = 0, w = 0;
      t.mask = read_mask(mask_path, &h, &w);
      if (h != t.height() || w != t.width()) throw std::invalid_argument(mask_path.string() + ": mask dims differ from tile");
    }
    out.push_back(std::move(t));
  }
  return out;
}

void write_dataset(const std::filesystem::path& dir, const std::vector<TileSample>& tiles, const std::string& prefix) {
  std::filesystem::create_directories(dir);
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    char name[64];
    std::snprintf(name, sizeof(name), "%s_%05zu", prefix.c_str(), i);
    write_mstf(dir / (std::string(name) + ".mstf"), tiles[i]);
    if (tiles[i].mask) write_mask(dir / (std::string(name) + ".msk"), *tiles[i].mask, tiles[i].height(), tiles[i].width());
  }
}

}  // namespace bandfuse
