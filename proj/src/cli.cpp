#include "bandfuse/cli.hpp"

#include "bandfuse/bench.hpp"
#include "bandfuse/checkpoint.hpp"
#include "bandfuse/io.hpp"
#include "bandfuse/metrics.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace bandfuse {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double d = 0.0;
  try {
    d = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument("config: '" + key + "' expects a number, got '" + v + "'");
  return d;
}

long long to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  if (d != static_cast<double>(static_cast<long long>(d))) {
    throw std::invalid_argument("config: '" + key + "' expects an integer, got '" + v + "'");
  }
  return static_cast<long long>(d);
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("config: '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, std::string v) {
  if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<int>(to_int(key, item)));
  }
  return out;
}

}  // namespace

TrainSetup parse_train_setup(std::istream& in) {
  TrainSetup s;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line.front() == '#' || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    std::string v = trim(line.substr(eq + 1));
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);

    auto& t = s.train;
    if (key == "base_lr") t.base_lr = to_double(key, v);
    else if (key == "weight_decay") t.weight_decay = to_double(key, v);
    else if (key == "batch_size") t.batch_size = static_cast<int>(to_int(key, v));
    else if (key == "epochs") t.epochs = static_cast<int>(to_int(key, v));
    else if (key == "steps_per_epoch") t.steps_per_epoch = static_cast<int>(to_int(key, v));
    else if (key == "warmup_epochs") t.warmup_epochs = to_double(key, v);
    else if (key == "final_lr_frac") t.final_lr_frac = to_double(key, v);
    else if (key == "warmup_start_frac") t.warmup_start_frac = to_double(key, v);
    else if (key == "seed") t.seed = static_cast<std::uint64_t>(to_int(key, v));
    else if (key == "max_bands") t.max_bands = static_cast<int>(to_int(key, v));
    else if (key == "random_band_subsets") t.random_band_subsets = to_bool(key, v);
    else if (key == "augment") t.augment = to_bool(key, v);
    else if (key == "use_encoder") s.use_encoder = to_bool(key, v);
    else if (key == "encoding_dims") s.encoder.descriptor.encoding_dims = static_cast<int>(to_int(key, v));
    else if (key == "encoding") {
      if (v == "shared") s.encoder.descriptor.encoding = EncodingVariant::SharedFrequency;
      else if (v == "log") s.encoder.descriptor.encoding = EncodingVariant::LogStaggered;
      else throw std::invalid_argument("config: encoding must be 'shared' or 'log'");
    } else if (key == "stats") {
      if (v == "four") s.encoder.descriptor.stats = StatsVariant::FourSummary;
      else if (v == "percentile") s.encoder.descriptor.stats = StatsVariant::FivePercentile;
      else throw std::invalid_argument("config: stats must be 'four' or 'percentile'");
    } else if (key == "expand_widths") s.encoder.expand_widths = to_int_list(key, v);
    else if (key == "d_token") s.encoder.d_token = static_cast<int>(to_int(key, v));
    else if (key == "n_layers") s.encoder.n_layers = static_cast<int>(to_int(key, v));
    else if (key == "n_heads") s.encoder.n_heads = static_cast<int>(to_int(key, v));
    else if (key == "d_ffn") s.encoder.d_ffn = static_cast<int>(to_int(key, v));
    else if (key == "contract_widths") s.encoder.contract_widths = to_int_list(key, v);
    else if (key == "c_out") s.encoder.c_out = static_cast<int>(to_int(key, v));
    else if (key == "padding_level") s.encoder.padding_level = padding_level_from_int(static_cast<int>(to_int(key, v)));
    else if (key == "output_block") {
      if (v == "multiplication") s.encoder.output_block = OutputBlock::BandMultiplication;
      else if (v == "embedding") s.encoder.output_block = OutputBlock::BandEmbedding;
      else throw std::invalid_argument("config: output_block must be 'multiplication' or 'embedding'");
    } else if (key == "base_channels") s.segnet.base_channels = static_cast<int>(to_int(key, v));
    else if (key == "n_stages") s.segnet.n_stages = static_cast<int>(to_int(key, v));
    else if (key == "qat_steps") s.qat_steps = static_cast<int>(to_int(key, v));
    else if (key == "qat_lr") s.qat_lr = to_double(key, v);
    else if (key == "val_fraction") s.val_fraction = to_double(key, v);
    else if (key == "log_every") s.log_every = static_cast<int>(to_int(key, v));
    else if (key == "synthetic_tiles") s.synthetic_tiles = static_cast<std::size_t>(to_int(key, v));
    else if (key == "synthetic_size") s.synthetic.size = to_int(key, v);
    else if (key == "synthetic_seed") s.synthetic.seed = static_cast<std::uint64_t>(to_int(key, v));
    else throw std::invalid_argument("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
  }
  s.train.validate();
  s.encoder.validate();
  s.segnet.validate();
  if (!(s.val_fraction >= 0.0 && s.val_fraction < 1.0)) throw std::invalid_argument("config: val_fraction must be in [0, 1)");
  if (s.qat_steps < 0) throw std::invalid_argument("config: qat_steps must be >= 0");
  if (s.log_every < 1) throw std::invalid_argument("config: log_every must be >= 1");
  return s;
}

namespace {

Model<float> load_model(const std::string& encoder_path, const std::string& segnet_path) {
  Model<float> model;
  if (!encoder_path.empty()) {
    EncoderConfig ec;
    EncoderParams<float> ep;
    load_encoder(encoder_path, ep, ec);
    model.encoder_config = ec;
    model.encoder = std::move(ep);
  }
  load_segnet(segnet_path, model.segnet, model.segnet_config);
  return model;
}

std::vector<std::filesystem::path> mask_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::invalid_argument(dir.string() + " is not a directory");
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() == ".msk") out.push_back(e.path().filename());
  }
  std::sort(out.begin(), out.end());
  return out;
}

int cmd_encode(const std::string& input, const std::string& params_path, int level, Index bmax, const std::string& out_path,
               std::ostream& out) {
  EncoderConfig config;
  EncoderParams<float> params;
  load_encoder(params_path, params, config);
  config.padding_level = padding_level_from_int(level);
  const TileSample tile = read_mstf(input);
  const Index b = bmax > 0 ? bmax : tile.band_count();
  if (b < tile.band_count()) throw std::invalid_argument("--bmax is smaller than the tile's band count");
  const Tensor<float> features = encoder_forward(pad_bands(tile.bands, b), std::span<const BandSpec>(tile.specs),
                                                 tile.band_count(), params, config);
  write_raw_f32(out_path, features);
  out << "wrote " << shape_string(features.shape()) << " f32 to " << out_path << '\n';
  return 0;
}

int cmd_segment(const std::string& input, const std::string& encoder_path, const std::string& segnet_path,
                bool quantized, Index bmax, const std::string& out_path, std::ostream& out) {
  const Model<float> model = load_model(encoder_path, segnet_path);
  if (quantized && !model.segnet.scales) {
    throw std::invalid_argument("--quantized needs a segmentation checkpoint with calibration scales");
  }
  const TileSample tile = read_mstf(input);
  const Index b = bmax > 0 ? bmax : tile.band_count();
  const auto labels = predict_classes(model_forward(model, tile, b, quantized));
  write_mask(out_path, labels, tile.height(), tile.width());
  out << "wrote " << tile.height() << "x" << tile.width() << " mask to " << out_path << '\n';
  return 0;
}

int cmd_train(const std::string& data, const std::string& config_path, const std::string& out_dir, bool synthetic,
              std::ostream& out) {
  TrainSetup setup;
  if (!config_path.empty()) {
    std::ifstream f(config_path);
    if (!f) throw std::invalid_argument("cannot open config " + config_path);
    setup = parse_train_setup(f);
  }
  std::vector<TileSample> tiles;
  if (synthetic) {
    tiles = make_synthetic_dataset(setup.synthetic, setup.synthetic_tiles);
    if (!data.empty()) write_dataset(data, tiles);
  } else {
    if (data.empty()) throw std::invalid_argument("train needs --data or --synthetic");
    tiles = read_dataset(data);
  }
  if (tiles.empty()) throw std::invalid_argument("no training tiles found");
  for (const auto& t : tiles) {
    t.validate();
    if (!t.mask) throw std::invalid_argument("every training tile needs a .msk label file");
  }

  const auto n_val = static_cast<std::size_t>(setup.val_fraction * static_cast<double>(tiles.size()));
  const std::span<const TileSample> all(tiles);
  const auto train_set = all.first(tiles.size() - n_val);
  const auto val_set = all.last(n_val);
  if (train_set.empty()) throw std::invalid_argument("validation split leaves no training tiles");

  SegNetConfig segnet = setup.segnet;
  if (!setup.use_encoder) segnet.in_channels = static_cast<int>(widest_tile(train_set));
  Model<float> model = make_model<float>(setup.use_encoder ? std::optional(setup.encoder) : std::nullopt, segnet,
                                         setup.train.seed);
  out << "training " << train_set.size() << " tiles, validating " << val_set.size() << ", "
      << setup.train.total_steps() << " steps\n";
  const auto result = train(model, train_set, setup.train, val_set, [&](int step, double loss) {
    if (step % setup.log_every == 0 || step + 1 == setup.train.total_steps()) {
      out << "step " << step << " loss " << loss << '\n';
    }
  });
  if (result.best_epoch >= 0) out << "best epoch " << result.best_epoch << '\n';
  const Index bmax = setup.train.max_bands > 0 ? setup.train.max_bands : widest_tile(train_set);
  if (!val_set.empty()) {
    out << "float validation\n"
        << format_metrics_table(class_metrics(evaluate(model, val_set, EvalOptions{bmax, false, std::nullopt})),
                                cloud_class_names());
  }
  // QAT tunes the weights for the quantized path; from here on that path is
  // the one to deploy and report.
  if (setup.qat_steps > 0) {
    const auto losses = quantization_aware_finetune(model, train_set, setup.train, setup.qat_steps, setup.qat_lr);
    out << "quantization-aware fine-tuning " << losses.size() << " steps, final loss " << losses.back() << '\n';
    if (!val_set.empty()) {
      out << "quantized validation\n"
          << format_metrics_table(class_metrics(evaluate(model, val_set, EvalOptions{bmax, true, std::nullopt})),
                                  cloud_class_names());
    }
  }

  std::filesystem::create_directories(out_dir);
  if (model.encoder) save_encoder(std::filesystem::path(out_dir) / "encoder.enc", *model.encoder, *model.encoder_config);
  save_segnet(std::filesystem::path(out_dir) / "segnet.sgn", model.segnet, model.segnet_config);
  out << "saved parameters to " << out_dir << '\n';
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& truth_dir, bool binary, std::ostream& out) {
  const auto names = mask_files(truth_dir);
  if (names.empty()) throw std::invalid_argument("no .msk files in " + truth_dir);
  ConfusionMatrix cm(3);
  for (const auto& name : names) {
    const auto pred_path = std::filesystem::path(pred_dir) / name;
    if (!std::filesystem::exists(pred_path)) throw std::invalid_argument("missing prediction " + pred_path.string());
    Index ht = 0, wt = 0, hp = 0, wp = 0;
    const auto truth = read_mask(std::filesystem::path(truth_dir) / name, &ht, &wt);
    const auto pred = read_mask(pred_path, &hp, &wp);
    if (ht != hp || wt != wp) throw std::invalid_argument(name.string() + ": prediction and truth sizes differ");
    update_confusion(cm, pred, truth);
  }
  const auto& class_names = binary ? binary_class_names() : cloud_class_names();
  const auto report = class_metrics(binary ? collapse_binary(cm) : cm);
  out << format_metrics_table(report, class_names);
  out << format_metrics_json(report, class_names) << '\n';
  return 0;
}

int cmd_bench(const std::string& variant, Index bands, int iters, int warmup, Index size, std::ostream& out) {
  const BenchReport r = bench_encoder(variant, bands, size, iters, warmup);
  out << format_bench_text(r) << '\n' << format_bench_json(r) << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sensor-independent cloud segmentation toolkit", "bandfuse"};
  app.require_subcommand(1);

  std::string input, params, out_path, encoder_params, segnet_params, data, config, out_dir, pred, truth, variant;
  int level = 3, iters = 10, warmup = 3;
  Index bmax = 0, bands = 5, size = 512;
  bool quantized = false, synthetic = false, binary = false;

  auto* encode = app.add_subcommand("encode", "Run the spectral encoder on one tile");
  encode->add_option("--input", input, "MSTF tile")->required();
  encode->add_option("--params", params, "Encoder checkpoint")->required();
  encode->add_option("--level", level, "Padding level")->check(CLI::IsMember({1, 2, 3}));
  encode->add_option("--bmax", bmax, "Pad to this many bands (default: tile band count)");
  encode->add_option("--out", out_path, "Raw f32 C x H x W output")->required();

  auto* segment = app.add_subcommand("segment", "Predict a cloud mask for one tile");
  segment->add_option("--input", input, "MSTF tile")->required();
  segment->add_option("--encoder-params", encoder_params, "Encoder checkpoint")->required();
  segment->add_option("--segnet-params", segnet_params, "Segmentation checkpoint")->required();
  segment->add_flag("--quantized", quantized, "Use the fake-quantized network");
  segment->add_option("--bmax", bmax, "Pad to this many bands (default: tile band count)");
  segment->add_option("--out", out_path, "Output mask file")->required();

  auto* trainc = app.add_subcommand("train", "Train encoder and segmentation network");
  trainc->add_option("--data", data, "Directory of .mstf/.msk pairs (written to with --synthetic)");
  trainc->add_option("--config", config, "key = value training config");
  trainc->add_option("--out", out_dir, "Output parameter directory")->required();
  trainc->add_flag("--synthetic", synthetic, "Generate the synthetic dataset");

  auto* evalc = app.add_subcommand("eval", "Score predicted masks against ground truth");
  evalc->add_option("--pred", pred, "Directory of predicted .msk files")->required();
  evalc->add_option("--truth", truth, "Directory of reference .msk files")->required();
  evalc->add_flag("--binary", binary, "Merge thick and thin cloud");

  auto* benchc = app.add_subcommand("bench", "Encoder latency benchmark");
  benchc->add_option("--variant", variant, "Encoder variant")->required()->check(CLI::IsMember(bench_variant_names()));
  benchc->add_option("--bands", bands, "Number of bands")->required()->check(CLI::PositiveNumber);
  benchc->add_option("--iters", iters, "Timed iterations (>= 10)")->required();
  benchc->add_option("--warmup", warmup, "Warmup runs (>= 3)");
  benchc->add_option("--size", size, "Tile edge length")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*encode) return cmd_encode(input, params, level, bmax, out_path, out);
    if (*segment) return cmd_segment(input, encoder_params, segnet_params, quantized, bmax, out_path, out);
    if (*trainc) return cmd_train(data, config, out_dir, synthetic, out);
    if (*evalc) return cmd_eval(pred, truth, binary, out);
    if (*benchc) return cmd_bench(variant, bands, iters, warmup, size, out);
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace bandfuse
