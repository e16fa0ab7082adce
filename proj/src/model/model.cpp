#include "roicodec/model/model.hpp"

#include <cmath>

namespace roicodec::model {

Geometry Geometry::for_image(std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw DimensionError("empty image");
  auto up = [](std::size_t v) { return (v + kHyperFactor - 1) / kHyperFactor * kHyperFactor; };
  return {height, width, up(height), up(width)};
}

template <typename T>
Tensor<T> lambda_map(const Tensor<T>& mask, double alpha, double omega) {
  if (!(alpha > 0.0)) throw ValidationError("lambda_map: alpha must be positive");
  nn::validate_mask(mask);
  std::vector<T> out(mask.numel());
  const auto m = mask.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<T>(alpha * std::exp(omega * static_cast<double>(m[i])) * 255.0 * 255.0);
  return Tensor<T>::from_data(mask.shape(), std::move(out));
}

template <typename T>
Tensor<T> anchor_mask(std::size_t height, std::size_t width, bool anchors) {
  std::vector<T> v(height * width);
  for (std::size_t i = 0; i < height; ++i)
    for (std::size_t j = 0; j < width; ++j) v[i * width + j] = ((i + j) % 2 == 0) == anchors ? T(1) : T(0);
  return Tensor<T>::from_data({height, width}, std::move(v));
}

template <typename T>
CodecModel<T>::CodecModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  const auto& c = config_;
  const std::size_t Cc = c.condition_channels, Cy = c.latent_channels, Cz = c.hyper_channels, Ch = c.hyper_hidden;
  nn::ParamInit init(c.seed);
  auto make_pairs = [&](std::size_t n, std::size_t ch, std::size_t heads, std::size_t window) {
    std::vector<nn::SwinBlockPair<T>> v;
    for (std::size_t i = 0; i < n; ++i) v.emplace_back(ch, heads, window, c.ffn_ratio, init);
    return v;
  };

  fusion_ = nn::MaskFusion<T>(Cc, c.fusion_depth, init);
  stem_ = nn::Conv2d<T>(3, c.channels[0], c.stem_kernel, c.stem_stride, init);
  stem_sft_ = nn::Sft<T>(Cc, c.channels[0], 3, init);
  for (std::size_t s = 0; s < 3; ++s) {
    const std::size_t next = s < 2 ? c.channels[s + 1] : Cy;
    Stage st;
    st.pairs = make_pairs(c.blocks[s], c.channels[s], c.heads[s], c.main_window);
    st.down = nn::PatchDownsample<T>(c.channels[s], next, init);
    st.gdn = nn::Gdn<T>(next, false);
    st.sft = nn::Sft<T>(Cc, next, 3, init);
    stages_.push_back(std::move(st));
  }

  hyper_pairs_ = make_pairs(c.hyper_blocks, Cy, c.hyper_heads, c.hyper_window);
  hyper_down1_ = nn::PatchDownsample<T>(Cy, Cz, init);
  hyper_down2_ = nn::PatchDownsample<T>(Cz, Cz, init);
  hyper_sft_ = nn::Sft<T>(Cc, Cz, 3, init);

  cond_base_ = nn::Conv2d<T>(Cz, Cc, 3, 1, init);
  for (std::size_t i = 0; i < decoder_site_factors().size(); ++i) cond_levels_.emplace_back(Cc, Cc, 3, 1, init);

  hyper_dec_sft_ = nn::Sft<T>(Cc, Cz, 3, init);
  hyper_up1_ = nn::PatchUpsample<T>(Cz, Ch, init);
  hyper_up2_ = nn::PatchUpsample<T>(Ch, Ch, init);
  hyper_dec_pairs_ = make_pairs(c.hyper_blocks, Ch, c.hyper_heads, c.hyper_window);
  mu_head_ = nn::Linear<T>(Ch, Cy, 1.0 / std::sqrt(static_cast<double>(Ch)), init);
  sigma_head_ = nn::Linear<T>(Ch, Cy, 1.0 / std::sqrt(static_cast<double>(Ch)), init);
  if (c.context_mode == ContextMode::Checkerboard) context_ = nn::Conv2d<T>(Cy, 2 * Cy, 5, 1, init);

  for (std::size_t k = 0; k < 3; ++k) {
    const std::size_t s = 2 - k;
    const std::size_t in = s == 2 ? Cy : c.channels[s + 1];
    DecoderStage d;
    d.sft = nn::Sft<T>(Cc, in, 3, init);
    d.igdn = nn::Gdn<T>(in, true);
    d.up = nn::PatchUpsample<T>(in, c.channels[s], init);
    d.pairs = make_pairs(c.blocks[s], c.channels[s], c.heads[s], c.main_window);
    dec_stages_.push_back(std::move(d));
  }
  final_sft_ = nn::Sft<T>(Cc, c.channels[0], 3, init);
  final_ = nn::ConvTranspose2d<T>(c.channels[0], 3, c.stem_kernel, c.stem_stride, init);

  prior_ = entropy::FactorizedPrior<T>(Cz, init);

  // Parameter order is the checkpoint order.
  auto& P = params_;
  fusion_.collect(P, "enc.fusion");
  stem_.collect(P, "enc.stem");
  stem_sft_.collect(P, "enc.stem_sft");
  for (std::size_t s = 0; s < 3; ++s) {
    const std::string pre = "enc.stage" + std::to_string(s);
    for (std::size_t i = 0; i < stages_[s].pairs.size(); ++i)
      stages_[s].pairs[i].collect(P, pre + ".pair" + std::to_string(i));
    stages_[s].down.collect(P, pre + ".down");
    stages_[s].gdn.collect(P, pre + ".gdn");
    stages_[s].sft.collect(P, pre + ".sft");
  }
  for (std::size_t i = 0; i < hyper_pairs_.size(); ++i) hyper_pairs_[i].collect(P, "henc.pair" + std::to_string(i));
  hyper_down1_.collect(P, "henc.down1");
  hyper_down2_.collect(P, "henc.down2");
  hyper_sft_.collect(P, "henc.sft");
  cond_base_.collect(P, "cond.base");
  for (std::size_t i = 0; i < cond_levels_.size(); ++i) cond_levels_[i].collect(P, "cond.level" + std::to_string(i));
  hyper_dec_sft_.collect(P, "hdec.sft");
  hyper_up1_.collect(P, "hdec.up1");
  hyper_up2_.collect(P, "hdec.up2");
  for (std::size_t i = 0; i < hyper_dec_pairs_.size(); ++i)
    hyper_dec_pairs_[i].collect(P, "hdec.pair" + std::to_string(i));
  mu_head_.collect(P, "hdec.mu");
  sigma_head_.collect(P, "hdec.sigma");
  if (c.context_mode == ContextMode::Checkerboard) context_.collect(P, "ctx.conv");
  for (std::size_t k = 0; k < 3; ++k) {
    const std::string pre = "dec.stage" + std::to_string(2 - k);
    dec_stages_[k].sft.collect(P, pre + ".sft");
    dec_stages_[k].igdn.collect(P, pre + ".igdn");
    dec_stages_[k].up.collect(P, pre + ".up");
    for (std::size_t i = 0; i < dec_stages_[k].pairs.size(); ++i)
      dec_stages_[k].pairs[i].collect(P, pre + ".pair" + std::to_string(i));
  }
  final_sft_.collect(P, "dec.final_sft");
  final_.collect(P, "dec.final");
  prior_.collect(P, "prior");
}

template <typename T>
Tensor<T> CodecModel<T>::run_pairs(const std::vector<nn::SwinBlockPair<T>>& pairs, Tensor<T> x) {
  for (const auto& p : pairs) x = p.forward(x);
  return x;
}

template <typename T>
EncoderOutput<T> CodecModel<T>::encode_latents(const Tensor<T>& image, const Tensor<T>& mask) const {
  if (!image.defined() || image.rank() != 4 || image.numel() == 0) throw DimensionError("encode: empty image");
  if (image.dim(1) != 3) throw DimensionError("encode: image must have 3 channels, got " + shape_str(image.shape()));
  const auto geometry = Geometry::for_image(image.dim(2), image.dim(3));
  const std::size_t pb = geometry.padded_height - geometry.height, pr = geometry.padded_width - geometry.width;
  if (!mask.defined() || mask.rank() != 4 || mask.dim(0) != image.dim(0) || mask.dim(1) != 1 ||
      mask.dim(2) != image.dim(2) || mask.dim(3) != image.dim(3))
    throw DimensionError("encode: mask must be [N,1,H,W] matching the image");
  nn::validate_mask(mask);
  auto x = (pb || pr) ? pad_replicate(image, pb, pr) : image;
  auto m = (pb || pr) ? pad_replicate(mask, pb, pr) : mask;

  auto conds = nn::mask_condition_path(x, m, fusion_, encoder_site_factors());
  auto h = stem_sft_.forward(stem_.forward(x), conds.levels[0]);
  for (std::size_t s = 0; s < 3; ++s) {
    const auto& st = stages_[s];
    auto t = st.down.forward(run_pairs(st.pairs, nn::to_channels_last(h)));
    h = st.sft.forward(st.gdn.forward(nn::to_channels_first(t)), conds.levels[s + 1]);
  }
  auto y = h;

  auto t = run_pairs(hyper_pairs_, nn::to_channels_last(y));
  t = hyper_down2_.forward(gelu(hyper_down1_.forward(t)));
  auto z = hyper_sft_.forward(nn::to_channels_first(t), conds.levels[4]);
  return {{y, z, geometry}, std::move(conds)};
}

template <typename T>
ConditionPyramid<T> CodecModel<T>::decoder_conditions(const Tensor<T>& z_hat) const {
  if (z_hat.rank() != 4 || z_hat.dim(1) != config_.hyper_channels)
    throw DimensionError("z_hat " + shape_str(z_hat.shape()) + " does not match hyper_channels");
  auto base = gelu(cond_base_.forward(z_hat));
  ConditionPyramid<T> out;
  const auto& factors = decoder_site_factors();
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const std::size_t up = kHyperFactor / factors[i];
    out.levels.push_back(cond_levels_[i].forward(up == 1 ? base : upsample_nearest2d(base, up)));
    out.factors.push_back(factors[i]);
  }
  return out;
}

template <typename T>
GaussianParams<T> CodecModel<T>::hyper_analysis_params(const Tensor<T>& z_hat) const {
  return hyper_analysis_params(z_hat, decoder_conditions(z_hat));
}

template <typename T>
GaussianParams<T> CodecModel<T>::hyper_analysis_params(const Tensor<T>& z_hat,
                                                       const ConditionPyramid<T>& conditions) const {
  auto h = hyper_dec_sft_.forward(z_hat, conditions.levels[0]);
  auto t = hyper_up2_.forward(gelu(hyper_up1_.forward(nn::to_channels_last(h))));
  t = run_pairs(hyper_dec_pairs_, t);
  GaussianParams<T> p;
  p.mu = nn::to_channels_first(mu_head_.forward(t));
  p.sigma_raw = nn::to_channels_first(sigma_head_.forward(t));
  p.sigma = add_scalar(softplus(p.sigma_raw), static_cast<T>(kSigmaMin));
  return p;
}

template <typename T>
GaussianParams<T> CodecModel<T>::entropy_params(const GaussianParams<T>& hyper, const Tensor<T>& y_hat) const {
  if (config_.context_mode == ContextMode::None) return hyper;
  const std::size_t Cy = config_.latent_channels, H = y_hat.dim(2), W = y_hat.dim(3);
  auto ctx = context_.forward(mul(y_hat, anchor_mask<T>(H, W, true)));
  auto non_anchor = anchor_mask<T>(H, W, false);
  GaussianParams<T> p;
  p.mu = add(hyper.mu, mul(slice(ctx, 1, 0, Cy), non_anchor));
  p.sigma_raw = add(hyper.sigma_raw, mul(slice(ctx, 1, Cy, Cy), non_anchor));
  p.sigma = add_scalar(softplus(p.sigma_raw), static_cast<T>(kSigmaMin));
  return p;
}

template <typename T>
Tensor<T> CodecModel<T>::synthesize(const Tensor<T>& y_hat, const ConditionPyramid<T>& conditions) const {
  auto h = y_hat;
  for (std::size_t k = 0; k < dec_stages_.size(); ++k) {
    const auto& d = dec_stages_[k];
    h = d.igdn.forward(d.sft.forward(h, conditions.levels[k + 1]));
    h = nn::to_channels_first(run_pairs(d.pairs, d.up.forward(nn::to_channels_last(h))));
  }
  h = final_sft_.forward(h, conditions.levels[4]);
  return final_.forward(h);
}

template <typename T>
Tensor<T> CodecModel<T>::decode_latents(const Tensor<T>& y_hat, const Tensor<T>& z_hat,
                                        const Geometry& geometry) const {
  if (y_hat.rank() != 4 || z_hat.rank() != 4 || y_hat.dim(0) != z_hat.dim(0) ||
      y_hat.dim(1) != config_.latent_channels || y_hat.dim(2) != geometry.latent_height() ||
      y_hat.dim(3) != geometry.latent_width() || z_hat.dim(2) != geometry.hyper_height() ||
      z_hat.dim(3) != geometry.hyper_width() || geometry.height > geometry.padded_height ||
      geometry.width > geometry.padded_width)
    throw DimensionError("decode: latents " + shape_str(y_hat.shape()) + ", " + shape_str(z_hat.shape()) +
                         " do not match geometry " + std::to_string(geometry.height) + "x" +
                         std::to_string(geometry.width));
  auto x = clamp(synthesize(y_hat, decoder_conditions(z_hat)), T(0), T(1));
  return crop(x, geometry.height, geometry.width);
}

template <typename T>
std::size_t CodecModel<T>::count_params() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.numel();
  return n;
}

template <typename T>
std::vector<std::pair<std::string, nn::SwinBlock<T>*>> CodecModel<T>::swin_sites() {
  std::vector<std::pair<std::string, nn::SwinBlock<T>*>> out;
  auto add_pairs = [&](std::vector<nn::SwinBlockPair<T>>& pairs, const std::string& pre) {
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      out.emplace_back(pre + ".pair" + std::to_string(i) + ".w", &pairs[i].regular);
      out.emplace_back(pre + ".pair" + std::to_string(i) + ".sw", &pairs[i].shifted_block);
    }
  };
  for (std::size_t s = 0; s < 3; ++s) add_pairs(stages_[s].pairs, "enc.stage" + std::to_string(s));
  add_pairs(hyper_pairs_, "henc");
  add_pairs(hyper_dec_pairs_, "hdec");
  for (std::size_t k = 0; k < 3; ++k) add_pairs(dec_stages_[k].pairs, "dec.stage" + std::to_string(2 - k));
  return out;
}

#define ROICODEC_INSTANTIATE(T)                                                 \
  template Tensor<T> lambda_map(const Tensor<T>&, double, double);             \
  template Tensor<T> anchor_mask(std::size_t, std::size_t, bool);              \
  template class CodecModel<T>;

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec::model
