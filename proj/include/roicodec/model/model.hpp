#pragma once

#include <string>
#include <vector>

#include "roicodec/entropy/factorized.hpp"
#include "roicodec/model/config.hpp"
#include "roicodec/nn/layers.hpp"

namespace roicodec::model {

using nn::ConditionPyramid;

// Original and padded spatial size of one coded image.
struct Geometry {
  std::size_t height = 0, width = 0;
  std::size_t padded_height = 0, padded_width = 0;

  static Geometry for_image(std::size_t height, std::size_t width);
  std::size_t latent_height() const { return padded_height / kMainFactor; }
  std::size_t latent_width() const { return padded_width / kMainFactor; }
  std::size_t hyper_height() const { return padded_height / kHyperFactor; }
  std::size_t hyper_width() const { return padded_width / kHyperFactor; }
  bool operator==(const Geometry&) const = default;
};

template <typename T>
struct LatentPair {
  Tensor<T> y;  // [N, C_y, H/16, W/16]
  Tensor<T> z;  // [N, C_z, H/64, W/64]
  Geometry geometry;
};

template <typename T>
struct EncoderOutput {
  LatentPair<T> latents;  // continuous, not yet quantized
  ConditionPyramid<T> conditions;
};

template <typename T>
struct GaussianParams {
  Tensor<T> mu, sigma;  // both shaped like y
  Tensor<T> sigma_raw;  // sigma = sigma_min + softplus(sigma_raw)
};

inline constexpr double kSigmaMin = 0.01;

// Per-pixel weight lambda_i = alpha * exp(omega * m_i) * 255^2.
template <typename T>
Tensor<T> lambda_map(const Tensor<T>& mask, double alpha, double omega);

// Anchor positions of the checkerboard split: (i + j) even.
template <typename T>
Tensor<T> anchor_mask(std::size_t height, std::size_t width, bool anchors);

template <typename T>
class CodecModel {
 public:
  explicit CodecModel(const ModelConfig& config);
  CodecModel(const CodecModel&) = delete;
  CodecModel& operator=(const CodecModel&) = delete;
  CodecModel(CodecModel&&) = default;

  const ModelConfig& config() const { return config_; }

  // Pads to a multiple of 64, runs the main and hyper encoders. The mask only
  // ever enters through the returned condition pyramid.
  EncoderOutput<T> encode_latents(const Tensor<T>& image, const Tensor<T>& mask) const;

  // Conditions for the hyper decoder and synthesis sites, from z_hat alone.
  ConditionPyramid<T> decoder_conditions(const Tensor<T>& z_hat) const;

  // Mean and scale of y from the hyper decoder only.
  GaussianParams<T> hyper_analysis_params(const Tensor<T>& z_hat) const;
  GaussianParams<T> hyper_analysis_params(const Tensor<T>& z_hat, const ConditionPyramid<T>& conditions) const;

  // Entropy parameters including the checkerboard context when enabled: anchor
  // elements keep the hyper parameters, non-anchors also see the anchors of
  // y_hat. With context_mode none this equals hyper_analysis_params.
  GaussianParams<T> entropy_params(const GaussianParams<T>& hyper, const Tensor<T>& y_hat) const;

  // Synthesis transform on padded geometry, without clamping or cropping.
  Tensor<T> synthesize(const Tensor<T>& y_hat, const ConditionPyramid<T>& conditions) const;

  // Decoder: (y_hat, z_hat, geometry) -> image in [0,1] cropped to geometry.
  Tensor<T> decode_latents(const Tensor<T>& y_hat, const Tensor<T>& z_hat, const Geometry& geometry) const;

  nn::ParameterList<T>& parameters() { return params_; }
  const nn::ParameterList<T>& parameters() const { return params_; }
  std::size_t count_params() const;

  const entropy::FactorizedPrior<T>& prior() const { return prior_; }

  // Blocks whose attention can be dumped, in forward order. Names look like
  // "enc.stage0.pair0.sw".
  std::vector<std::pair<std::string, nn::SwinBlock<T>*>> swin_sites();

 private:
  struct Stage {
    std::vector<nn::SwinBlockPair<T>> pairs;
    nn::PatchDownsample<T> down;
    nn::Gdn<T> gdn;
    nn::Sft<T> sft;
  };
  struct DecoderStage {
    nn::Sft<T> sft;
    nn::Gdn<T> igdn;
    nn::PatchUpsample<T> up;
    std::vector<nn::SwinBlockPair<T>> pairs;
  };

  static Tensor<T> run_pairs(const std::vector<nn::SwinBlockPair<T>>& pairs, Tensor<T> x_nhwc);

  ModelConfig config_;

  nn::MaskFusion<T> fusion_;
  nn::Conv2d<T> stem_;
  nn::Sft<T> stem_sft_;
  std::vector<Stage> stages_;

  std::vector<nn::SwinBlockPair<T>> hyper_pairs_;
  nn::PatchDownsample<T> hyper_down1_, hyper_down2_;
  nn::Sft<T> hyper_sft_;

  nn::Conv2d<T> cond_base_;
  std::vector<nn::Conv2d<T>> cond_levels_;  // one per decoder site

  nn::Sft<T> hyper_dec_sft_;
  nn::PatchUpsample<T> hyper_up1_, hyper_up2_;
  std::vector<nn::SwinBlockPair<T>> hyper_dec_pairs_;
  nn::Linear<T> mu_head_, sigma_head_;
  nn::Conv2d<T> context_;  // checkerboard only

  std::vector<DecoderStage> dec_stages_;
  nn::Sft<T> final_sft_;
  nn::ConvTranspose2d<T> final_;

  entropy::FactorizedPrior<T> prior_;

  nn::ParameterList<T> params_;
};

}  // namespace roicodec::model
