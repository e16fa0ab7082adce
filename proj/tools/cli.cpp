#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "roicodec/entropy/bitstream.hpp"
#include "roicodec/eval/attention.hpp"
#include "roicodec/eval/metrics.hpp"
#include "roicodec/eval/rd_curve.hpp"
#include "roicodec/io/image.hpp"
#include "roicodec/model/checkpoint.hpp"
#include "roicodec/tensor/parallel.hpp"
#include "roicodec/train/dataset.hpp"
#include "roicodec/train/synthetic.hpp"
#include "roicodec/train/trainer.hpp"

namespace roicodec::cli {

namespace fs = std::filesystem;

namespace {

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

std::string training_metadata(const train::TrainConfig& c, std::size_t steps_done) {
  std::ostringstream os;
  os << std::setprecision(17);
  os << "alpha = " << c.alpha << "\nomega = " << c.omega << "\nlr = " << c.lr << "\nbatch_size = " << c.batch_size
     << "\ncrop = " << c.crop << "\nsteps = " << steps_done << "\nseed = " << c.seed << "\nprecision = " << c.precision
     << "\nclip_norm = " << c.clip_norm << "\nuniform_lambda = " << (c.uniform_lambda ? "true" : "false") << "\n";
  return os.str();
}

template <typename T>
int train_with(const train::TrainConfig& cfg, std::ostream& out, std::ostream& err) {
  model::CodecModel<T> model = cfg.init.empty() ? model::CodecModel<T>(cfg.model_config())
                                                : model::load_checkpoint<T>(cfg.init);
  const auto data = train::Dataset::load(cfg.image_dir, cfg.mask_dir, cfg.crop,
                                         [&](const std::string& w) { err << "warning: " << one_line(w) << "\n"; });
  train::BatchStream stream(data, cfg.batch_size, cfg.crop, cfg.seed);
  train::TrainState state(cfg.seed);
  std::ofstream csv;
  if (!cfg.metrics.empty()) {
    csv.open(cfg.metrics);
    if (!csv) throw IoError(cfg.metrics + ": cannot write metrics");
  }
  out << "training " << cfg.model << " (" << model.count_params() << " params) on " << data.size()
      << " images, omega=" << cfg.omega << ", seed=" << cfg.seed << "\n";
  const auto t0 = std::chrono::steady_clock::now();
  auto history = train::run_training(model, stream, cfg, state, cfg.metrics.empty() ? nullptr : &csv,
                                     [&](const train::StepMetrics& m) {
                                       const double s = std::chrono::duration<double>(
                                                            std::chrono::steady_clock::now() - t0)
                                                            .count();
                                       out << "step " << m.step << " loss " << m.loss << " weighted_D "
                                           << m.weighted_distortion << " bpp " << m.bpp_estimate << " ("
                                           << std::fixed << std::setprecision(1) << s << "s)\n"
                                           << std::defaultfloat << std::setprecision(6);
                                     });
  model::save_checkpoint(model, cfg.out, training_metadata(cfg, history.size()));
  out << "saved " << cfg.out << "\n";
  return kExitOk;
}

model::CodecModel<float> load_model(const std::string& path, std::string* metadata = nullptr) {
  return model::load_checkpoint<float>(path, metadata);
}

// A directory expands to its *.ckpt files in name order.
std::vector<std::string> expand_models(const std::vector<std::string>& paths) {
  std::vector<std::string> out;
  for (const auto& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".ckpt") found.push_back(e.path().string());
      std::sort(found.begin(), found.end());
      if (found.empty()) throw IoError(p + ": no .ckpt files");
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  return out;
}

std::string format_omega(double w) {
  std::ostringstream os;
  os << w;
  return os.str();
}

int do_encode(const std::string& model_path, const std::string& input, const std::string& mask_path,
              const std::optional<double>& omega, const std::string& out_path, std::ostream& out) {
  std::string chosen = model_path;
  if (fs::is_directory(model_path)) {
    if (!omega) throw ValidationError("--omega is required when --model is a directory");
    chosen.clear();
    for (const auto& p : expand_models({model_path})) {
      std::string meta;
      load_model(p, &meta);
      const auto w = model::metadata_value(meta, "omega");
      if (!w.empty() && std::stod(w) == *omega) {
        chosen = p;
        break;
      }
    }
    if (chosen.empty()) throw ValidationError("no checkpoint in " + model_path + " was trained with omega=" + format_omega(*omega));
  }
  std::string meta;
  auto model = load_model(chosen, &meta);
  if (omega) {
    const auto w = model::metadata_value(meta, "omega");
    if (!w.empty() && std::stod(w) != *omega)
      throw ValidationError(chosen + " was trained with omega=" + w + ", not " + format_omega(*omega));
  }
  const auto image = io::image_to_tensor<float>(io::read_image(input));
  const auto mask = io::mask_to_tensor<float>(io::read_image(mask_path));
  const auto enc = entropy::compress(model, image, mask);
  util::write_file(out_path, enc.bytes);
  out << "wrote " << out_path << ": " << enc.bytes.size() << " bytes, "
      << eval::bpp_measure(enc.bytes, image.dim(2), image.dim(3)) << " bpp\n";
  return kExitOk;
}

int do_decode(const std::string& model_path, const std::string& in_path, const std::string& out_path,
              std::ostream& out) {
  auto model = load_model(model_path);
  const auto bytes = util::read_file(in_path);
  const auto image = entropy::decompress(model, bytes);
  io::write_image(out_path, io::tensor_to_image(image));
  out << "wrote " << out_path << ": " << image.dim(3) << "x" << image.dim(2) << "\n";
  return kExitOk;
}

int do_eval(const std::vector<std::string>& model_paths, const std::string& corpus, const std::string& csv_path,
            double threshold, std::ostream& out) {
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("--roi-th must lie in (0, 1]");
  std::vector<model::CodecModel<float>> models;
  std::vector<eval::RdModel<float>> entries;
  std::vector<std::string> labels;
  for (const auto& p : expand_models(model_paths)) {
    std::string meta;
    models.push_back(load_model(p, &meta));
    const auto w = model::metadata_value(meta, "omega");
    labels.push_back(w.empty() ? fs::path(p).stem().string() : w);
  }
  for (std::size_t i = 0; i < models.size(); ++i) entries.push_back({labels[i], &models[i]});
  const auto data = train::Dataset::load(fs::path(corpus) / "images", fs::path(corpus) / "masks", 1);
  std::vector<eval::RdImage> images;
  for (const auto& s : data.samples()) images.push_back({s.id, s.image, s.mask});
  const auto rows = eval::rd_curve(entries, images, threshold);
  eval::write_rd_csv(rows, csv_path);
  out << "wrote " << csv_path << ": " << rows.size() << " rows\n";
  return kExitOk;
}

int do_attn(const std::string& model_path, const std::string& input, const std::string& mask_path,
            const std::string& grid, const std::vector<std::string>& sites, const std::string& out_dir,
            std::ostream& out) {
  std::size_t rows = 0, cols = 0;
  char x = 0;
  std::istringstream gs(grid);
  if (!(gs >> rows >> x >> cols) || (x != 'x' && x != 'X') || rows == 0 || cols == 0 || !gs.eof())
    throw ValidationError("--grid expects RxC, e.g. 3x3");
  auto model = load_model(model_path);
  const auto image = io::image_to_tensor<float>(io::read_image(input));
  const auto mask = mask_path.empty() ? Tensor<float>::zeros({1, 1, image.dim(2), image.dim(3)})
                                      : io::mask_to_tensor<float>(io::read_image(mask_path));
  const auto queries = eval::grid_queries(image.dim(2), image.dim(3), rows, cols);
  const auto dump = eval::attention_dump(model, image, mask, sites, queries);
  eval::write_attention_dump(dump, out_dir);
  out << "wrote " << dump.maps.size() << " heatmaps for " << dump.sites.size() << " sites to " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  if (const char* t = std::getenv("ROICODEC_THREADS")) {
    const long n = std::atol(t);
    if (n > 0) set_max_threads(static_cast<std::size_t>(n));
  }

  CLI::App app{"Region-of-interest learned image codec", "roicodec"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  std::string config_path;
  std::optional<std::uint64_t> seed_override;
  train_cmd->add_option("--config", config_path, "training config (key = value)")->required();
  train_cmd->add_option("--seed", seed_override, "overrides the config seed");

  auto* enc_cmd = app.add_subcommand("encode", "compress an image with its ROI mask");
  std::string model_path, input, mask_path, out_path, in_path;
  std::optional<double> omega;
  enc_cmd->add_option("--model", model_path, "checkpoint, or a directory of checkpoints")->required();
  enc_cmd->add_option("--input", input, "PNG/PPM/PGM image")->required();
  enc_cmd->add_option("--mask", mask_path, "single-channel PNG/PGM mask")->required();
  enc_cmd->add_option("--omega", omega, "ROI strength the checkpoint must have been trained with");
  enc_cmd->add_option("--out", out_path, "output bitstream")->required();

  // Deliberately no --mask: the decoder never sees the ROI mask.
  auto* dec_cmd = app.add_subcommand("decode", "reconstruct an image from a bitstream");
  dec_cmd->add_option("--model", model_path, "checkpoint")->required();
  dec_cmd->add_option("--in", in_path, "bitstream")->required();
  dec_cmd->add_option("--out", out_path, "output image (.png, .ppm, .pgm)")->required();

  auto* eval_cmd = app.add_subcommand("eval", "rate-distortion table over a corpus");
  std::vector<std::string> models;
  std::string corpus, csv_path;
  double roi_th = eval::kDefaultRoiThreshold;
  eval_cmd->add_option("--models,--model", models, "checkpoints or directories")->required();
  eval_cmd->add_option("--corpus", corpus, "directory with images/ and masks/")->required();
  eval_cmd->add_option("--csv", csv_path, "output CSV")->required();
  eval_cmd->add_option("--roi-th", roi_th, "ROI threshold on mask values");

  auto* attn_cmd = app.add_subcommand("attn", "dump window attention maps for a query grid");
  std::string grid = "3x3";
  std::vector<std::string> sites{"all"};
  attn_cmd->add_option("--model", model_path, "checkpoint")->required();
  attn_cmd->add_option("--input", input, "image")->required();
  attn_cmd->add_option("--mask", mask_path, "optional mask for the encoder (default: no ROI)");
  attn_cmd->add_option("--grid", grid, "query grid RxC");
  attn_cmd->add_option("--sites", sites, "site names, indices, or all/enc/dec");
  attn_cmd->add_option("--out", out_path, "output directory")->required();

  auto* gen_cmd = app.add_subcommand("gen-corpus", "write a synthetic image/mask corpus");
  std::size_t count = 200, size = 64;
  std::uint64_t gen_seed = 0;
  gen_cmd->add_option("--out", out_path, "output directory")->required();
  gen_cmd->add_option("--count", count, "number of images");
  gen_cmd->add_option("--size", size, "image side in pixels");
  gen_cmd->add_option("--seed", gen_seed, "generator seed");

  auto* info_cmd = app.add_subcommand("info", "print checkpoint summary");
  info_cmd->add_option("--model", model_path, "checkpoint")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << one_line(e.what()) << "\n";
    return kExitUsage;
  }

  try {
    if (*train_cmd) {
      auto cfg = train::load_train_config(config_path);
      if (seed_override) cfg.seed = *seed_override;
      if (cfg.image_dir.empty() || cfg.mask_dir.empty()) throw ValidationError("config needs image_dir and mask_dir");
      return cfg.precision == "f64" ? train_with<double>(cfg, out, err) : train_with<float>(cfg, out, err);
    }
    if (*enc_cmd) return do_encode(model_path, input, mask_path, omega, out_path, out);
    if (*dec_cmd) return do_decode(model_path, in_path, out_path, out);
    if (*eval_cmd) return do_eval(models, corpus, csv_path, roi_th, out);
    if (*attn_cmd) return do_attn(model_path, input, mask_path, grid, sites, out_path, out);
    if (*gen_cmd) {
      train::generate_roi_corpus(out_path, count, size, gen_seed);
      out << "wrote " << count << " images to " << out_path << " (seed " << gen_seed << ")\n";
      return kExitOk;
    }
    if (*info_cmd) {
      std::string meta;
      auto model = load_model(model_path, &meta);
      out << "params " << model.count_params() << "\nhash " << std::hex << std::setw(16) << std::setfill('0')
          << model::model_hash(model) << std::dec << "\n" << model.config().canonical_text() << meta;
      return kExitOk;
    }
  } catch (const ModelMismatchError& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return kExitModelMismatch;
  } catch (const IoError& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return kExitIo;
  } catch (const FormatError& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return kExitConfig;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << one_line(e.what()) << "\n";
    return kExitOther;
  } catch (const std::exception& e) {
    err << "error: internal: " << one_line(e.what()) << "\n";
    return kExitOther;
  }
  return kExitUsage;
}

}  // namespace roicodec::cli
