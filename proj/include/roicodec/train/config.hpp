#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "roicodec/errors.hpp"
#include "roicodec/model/config.hpp"

namespace roicodec::train {

// Flat `key = value` training configuration. '#' starts a comment. Keys:
//   alpha, omega, lr, batch_size, steps, epochs, crop, seed, precision (f32|f64),
//   model (preset name), context (none|checkerboard), clip_norm (0 disables),
//   uniform_lambda (bool), image_dir, mask_dir, out, metrics, init, log_every
struct TrainConfig {
  double alpha = 0.001;
  double omega = 0.0;
  double lr = 1e-4;
  std::size_t batch_size = 2;
  std::size_t steps = 2000;  // used when epochs == 0
  std::size_t epochs = 0;
  std::size_t crop = 64;
  std::uint64_t seed = 0;
  std::string precision = "f32";
  std::string model = "toy";
  model::ContextMode context = model::ContextMode::None;
  double clip_norm = 1.0;
  // Constant lambda = alpha * 255^2 regardless of the mask.
  bool uniform_lambda = false;
  std::string image_dir, mask_dir;
  std::string out = "model.ckpt";
  std::string metrics;  // CSV path; empty disables
  std::string init;     // optional checkpoint to start from
  std::size_t log_every = 100;

  // Throws ValidationError naming the key on out-of-range values.
  void validate() const;
  model::ModelConfig model_config() const;
};

// Parses config text. Errors carry "<source>:<line>: ..." prefixes. Unknown
// keys and duplicate keys are rejected.
TrainConfig parse_train_config(const std::string& text, const std::string& source = "config");

// Reads and parses a config file. Relative directory and file values are
// resolved against the file's directory.
TrainConfig load_train_config(const std::filesystem::path& path);

}  // namespace roicodec::train
