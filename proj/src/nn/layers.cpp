#include "roicodec/nn/layers.hpp"

#include <algorithm>
#include <cmath>

#include "index_cache.hpp"

namespace roicodec::nn {

template <typename T>
Tensor<T> ParamInit::normal(const Shape& shape, double stddev) {
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) {
    double s = nd(rng_);
    s = std::clamp(s, -2.0, 2.0);  // truncated at two sigma
    x = static_cast<T>(s * stddev);
  }
  return Tensor<T>::from_data(shape, std::move(v), true);
}

template <typename T>
Tensor<T> ParamInit::uniform(const Shape& shape, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<T> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<T>(u(rng_));
  return Tensor<T>::from_data(shape, std::move(v), true);
}

template <typename T>
Tensor<T> ParamInit::constant(const Shape& shape, double value) {
  return Tensor<T>::full(shape, static_cast<T>(value), true);
}

template <typename T>
Conv2d<T>::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_, ParamInit& init,
                  bool with_bias)
    : stride(stride_), pad(kernel / 2) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel));
  weight = init.uniform<T>({out, in, kernel, kernel}, -bound, bound);
  if (with_bias) bias = init.uniform<T>({out}, -bound, bound);
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) const {
  return conv2d(x, weight, bias, stride, pad);
}

template <typename T>
void Conv2d<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

template <typename T>
ConvTranspose2d<T>::ConvTranspose2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_,
                                    ParamInit& init)
    : stride(stride_), pad(kernel / 2), output_pad(stride_ - 1) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * kernel * kernel) / (stride_ * stride_));
  weight = init.uniform<T>({in, out, kernel, kernel}, -bound, bound);
  bias = init.uniform<T>({out}, -bound, bound);
}

template <typename T>
Tensor<T> ConvTranspose2d<T>::forward(const Tensor<T>& x) const {
  return conv_transpose2d(x, weight, bias, stride, pad, output_pad);
}

template <typename T>
void ConvTranspose2d<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

template <typename T>
Linear<T>::Linear(std::size_t in, std::size_t out, double init_std, ParamInit& init, bool with_bias) {
  weight = init.normal<T>({in, out}, init_std);
  if (with_bias) bias = init.constant<T>({out}, 0.0);
}

template <typename T>
void Linear<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".weight", weight});
  if (bias.defined()) out.push_back({prefix + ".bias", bias});
}

template <typename T>
LayerNorm<T>::LayerNorm(std::size_t channels)
    : gamma(Tensor<T>::full({channels}, T(1), true)), beta(Tensor<T>::zeros({channels}, true)) {}

template <typename T>
void LayerNorm<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

// ---------------------------------------------------------------------------

template <typename T>
Gdn<T>::Gdn(std::size_t channels, bool inverse_) : inverse(inverse_) {
  // Effective beta = 1, gamma = 0.1 I + 1e-4 off the diagonal.
  beta_raw = Tensor<T>::full({channels}, static_cast<T>(std::sqrt(1.0 - kGdnBetaMin)), true);
  std::vector<T> g(channels * channels, T(0.01));
  for (std::size_t i = 0; i < channels; ++i) g[i * channels + i] = static_cast<T>(std::sqrt(0.1));
  gamma_raw = Tensor<T>::from_data({channels, channels}, std::move(g), true);
}

template <typename T>
Tensor<T> Gdn<T>::effective_beta() const {
  return add_scalar(square(beta_raw), static_cast<T>(kGdnBetaMin));
}

template <typename T>
Tensor<T> Gdn<T>::effective_gamma() const {
  return square(gamma_raw);
}

template <typename T>
Tensor<T> Gdn<T>::forward(const Tensor<T>& x) const {
  return gdn(x, effective_beta(), effective_gamma(), inverse);
}

template <typename T>
void Gdn<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  out.push_back({prefix + ".beta_raw", beta_raw});
  out.push_back({prefix + ".gamma_raw", gamma_raw});
}

// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> space_to_depth2(const Tensor<T>& x) {
  if (x.rank() != 4) throw DimensionError("space_to_depth2 expects NHWC");
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (H % 2 || W % 2) throw DimensionError("patch downsample needs even H and W, got " + shape_str(x.shape()));
  auto index = detail::cached_index(detail::key_of("s2d", {N, H, W, C}), [=] {
    std::vector<std::size_t> idx(N * H * W * C);
    std::size_t k = 0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t y = 0; y < H / 2; ++y)
        for (std::size_t xx = 0; xx < W / 2; ++xx)
          for (std::size_t g = 0; g < 4; ++g) {
            // group order (dy,dx): (0,0) (1,0) (0,1) (1,1)
            const std::size_t sy = 2 * y + (g % 2), sx = 2 * xx + (g / 2);
            for (std::size_t c = 0; c < C; ++c) idx[k++] = ((n * H + sy) * W + sx) * C + c;
          }
    return idx;
  });
  return gather(x, {N, H / 2, W / 2, 4 * C}, index);
}

template <typename T>
Tensor<T> depth_to_space2(const Tensor<T>& x) {
  if (x.rank() != 4 || x.dim(3) % 4) throw DimensionError("depth_to_space2 expects NHWC with 4k channels");
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3) / 4;
  auto index = detail::cached_index(detail::key_of("d2s", {N, H, W, C}), [=] {
    std::vector<std::size_t> idx(N * H * W * 4 * C);
    std::size_t k = 0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t y = 0; y < 2 * H; ++y)
        for (std::size_t xx = 0; xx < 2 * W; ++xx) {
          const std::size_t g = (y % 2) + 2 * (xx % 2);
          for (std::size_t c = 0; c < C; ++c) idx[k++] = ((n * H + y / 2) * W + xx / 2) * 4 * C + g * C + c;
        }
    return idx;
  });
  return gather(x, {N, 2 * H, 2 * W, C}, index);
}

template <typename T>
Tensor<T> to_channels_last(const Tensor<T>& x) {
  if (x.rank() != 4) throw DimensionError("to_channels_last expects NCHW");
  return permute(x, {0, 2, 3, 1});
}

template <typename T>
Tensor<T> to_channels_first(const Tensor<T>& x) {
  if (x.rank() != 4) throw DimensionError("to_channels_first expects NHWC");
  return permute(x, {0, 3, 1, 2});
}

template <typename T>
PatchDownsample<T>::PatchDownsample(std::size_t in, std::size_t out, ParamInit& init)
    : reduction(4 * in, out, 1.0 / std::sqrt(4.0 * in), init, false) {}

template <typename T>
Tensor<T> PatchDownsample<T>::forward(const Tensor<T>& x) const {
  return reduction.forward(space_to_depth2(x));
}

template <typename T>
void PatchDownsample<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  reduction.collect(out, prefix + ".reduction");
}

template <typename T>
PatchUpsample<T>::PatchUpsample(std::size_t in, std::size_t out, ParamInit& init)
    : expansion(in, 4 * out, 1.0 / std::sqrt(static_cast<double>(in)), init, false), out_channels(out) {}

template <typename T>
Tensor<T> PatchUpsample<T>::forward(const Tensor<T>& x) const {
  return depth_to_space2(expansion.forward(x));
}

template <typename T>
void PatchUpsample<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  expansion.collect(out, prefix + ".expansion");
}

// ---------------------------------------------------------------------------

template <typename T>
Sft<T>::Sft(std::size_t condition_channels, std::size_t feature_channels, std::size_t kernel, ParamInit& init)
    : gamma_head(condition_channels, feature_channels, kernel, 1, init),
      beta_head(condition_channels, feature_channels, kernel, 1, init) {
  // Start close to the identity modulation.
  auto gw = gamma_head.weight.mutable_data();
  for (auto& v : gw) v *= T(0.1);
  auto gb = gamma_head.bias.mutable_data();
  std::fill(gb.begin(), gb.end(), T(1));
  auto bw = beta_head.weight.mutable_data();
  for (auto& v : bw) v *= T(0.1);
  auto bb = beta_head.bias.mutable_data();
  std::fill(bb.begin(), bb.end(), T(0));
}

template <typename T>
Tensor<T> Sft<T>::forward(const Tensor<T>& feature, const Tensor<T>& condition) const {
  if (feature.rank() != 4 || condition.rank() != 4 || feature.dim(0) != condition.dim(0) ||
      feature.dim(2) != condition.dim(2) || feature.dim(3) != condition.dim(3))
    throw DimensionError("sft: condition " + shape_str(condition.shape()) + " does not match feature " +
                         shape_str(feature.shape()));
  auto gamma = gamma_head.forward(condition);
  auto beta = beta_head.forward(condition);
  if (gamma.shape() != feature.shape()) throw DimensionError("sft: head channel count differs from feature");
  return add(mul(gamma, feature), beta);
}

template <typename T>
void Sft<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  gamma_head.collect(out, prefix + ".gamma_head");
  beta_head.collect(out, prefix + ".beta_head");
}

template <typename T>
MaskFusion<T>::MaskFusion(std::size_t out_channels, std::size_t depth, ParamInit& init) {
  if (depth == 0) throw ValidationError("mask fusion depth must be >= 1");
  for (std::size_t i = 0; i < depth; ++i) convs.emplace_back(i == 0 ? 4 : out_channels, out_channels, 3, 1, init);
}

template <typename T>
Tensor<T> MaskFusion<T>::forward(const Tensor<T>& image, const Tensor<T>& mask) const {
  auto h = concat(std::vector<Tensor<T>>{mask, image}, 1);
  for (std::size_t i = 0; i < convs.size(); ++i) {
    if (i > 0) h = gelu(h);
    h = convs[i].forward(h);
  }
  return h;
}

template <typename T>
void MaskFusion<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  for (std::size_t i = 0; i < convs.size(); ++i) convs[i].collect(out, prefix + ".conv" + std::to_string(i));
}

template <typename T>
void validate_mask(const Tensor<T>& mask) {
  for (T v : mask.data())
    if (!(v >= T(0) && v <= T(1))) throw ValidationError("mask values must lie in [0, 1]");
}

template <typename T>
ConditionPyramid<T> mask_condition_path(const Tensor<T>& image, const Tensor<T>& mask, const MaskFusion<T>& fusion,
                                        const std::vector<std::size_t>& site_factors) {
  if (image.rank() != 4 || image.dim(1) != 3) throw DimensionError("image must be [N,3,H,W]");
  if (mask.rank() != 4 || mask.dim(1) != 1 || mask.dim(0) != image.dim(0) || mask.dim(2) != image.dim(2) ||
      mask.dim(3) != image.dim(3))
    throw DimensionError("mask " + shape_str(mask.shape()) + " does not match image " + shape_str(image.shape()));
  validate_mask(mask);
  auto fused = fusion.forward(image, mask);
  ConditionPyramid<T> pyramid;
  for (auto f : site_factors) {
    pyramid.levels.push_back(f == 1 ? fused : avg_pool2d(fused, f));
    pyramid.factors.push_back(f);
  }
  return pyramid;
}

#define ROICODEC_INSTANTIATE(T)                                                                         \
  template Tensor<T> ParamInit::normal<T>(const Shape&, double);                                        \
  template Tensor<T> ParamInit::uniform<T>(const Shape&, double, double);                               \
  template Tensor<T> ParamInit::constant<T>(const Shape&, double);                                      \
  template class Conv2d<T>;                                                                             \
  template class ConvTranspose2d<T>;                                                                    \
  template class Linear<T>;                                                                             \
  template class LayerNorm<T>;                                                                          \
  template class Gdn<T>;                                                                                \
  template class PatchDownsample<T>;                                                                    \
  template class PatchUpsample<T>;                                                                      \
  template class Sft<T>;                                                                                \
  template class MaskFusion<T>;                                                                         \
  template Tensor<T> space_to_depth2(const Tensor<T>&);                                                 \
  template Tensor<T> depth_to_space2(const Tensor<T>&);                                                 \
  template Tensor<T> to_channels_last(const Tensor<T>&);                                                \
  template Tensor<T> to_channels_first(const Tensor<T>&);                                               \
  template void validate_mask(const Tensor<T>&);                                                        \
  template ConditionPyramid<T> mask_condition_path(const Tensor<T>&, const Tensor<T>&, const MaskFusion<T>&, \
                                                   const std::vector<std::size_t>&);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec::nn
