#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace roicodec::model {

enum class ContextMode { None, Checkerboard };

std::string to_string(ContextMode mode);
ContextMode context_mode_from_string(const std::string& text);

struct ModelConfig {
  std::size_t stem_kernel = 5;
  std::size_t stem_stride = 2;
  // One entry per main stage; there are always three stages.
  std::vector<std::size_t> channels{96, 128, 160};
  std::vector<std::size_t> blocks{1, 1, 1};  // swin block pairs per stage
  std::vector<std::size_t> heads{3, 4, 5};
  std::size_t main_window = 8;
  std::size_t hyper_window = 4;
  std::size_t latent_channels = 192;  // C_y
  std::size_t hyper_channels = 128;   // C_z
  std::size_t hyper_hidden = 192;     // width of the hyper decoder before the mean/scale heads
  std::size_t hyper_blocks = 1;
  std::size_t hyper_heads = 6;
  double ffn_ratio = 2.0;
  std::size_t condition_channels = 32;
  std::size_t fusion_depth = 2;
  ContextMode context_mode = ContextMode::None;
  std::uint64_t seed = 0;

  // Throws ValidationError describing the first violated constraint.
  void validate() const;

  // Stable "key = value" lines; the checkpoint header and model hash use it.
  std::string canonical_text() const;
  static ModelConfig parse(const std::string& text);

  static ModelConfig preset(const std::string& name);
};

// Spatial factors of the SFT sites, in the order the conditions are consumed.
inline const std::vector<std::size_t>& encoder_site_factors() {
  static const std::vector<std::size_t> f{2, 4, 8, 16, 64};
  return f;
}
inline const std::vector<std::size_t>& decoder_site_factors() {
  static const std::vector<std::size_t> f{64, 16, 8, 4, 2};
  return f;
}

inline constexpr std::size_t kMainFactor = 16;
inline constexpr std::size_t kHyperFactor = 64;

}  // namespace roicodec::model
