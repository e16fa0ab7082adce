#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "roicodec/tensor/ops.hpp"

namespace roicodec::nn {

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
};

template <typename T>
using ParameterList = std::vector<NamedParameter<T>>;

// Seeded source for parameter initialization. Layers draw from it in
// construction order, so one seed fixes every weight of a model.
class ParamInit {
 public:
  explicit ParamInit(std::uint64_t seed) : rng_(seed) {}

  template <typename T>
  Tensor<T> normal(const Shape& shape, double stddev);
  template <typename T>
  Tensor<T> uniform(const Shape& shape, double lo, double hi);
  template <typename T>
  Tensor<T> constant(const Shape& shape, double value);

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// Plain building blocks
// ---------------------------------------------------------------------------

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, ParamInit& init,
         bool with_bias = true);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(ParameterList<T>& out, const std::string& prefix);

  Tensor<T> weight;  // [out, in, k, k]
  Tensor<T> bias;    // [out]
  std::size_t stride = 1;
  std::size_t pad = 0;
};

// Stride-2 upsampling convolution (transposed), output is exactly 2x the input.
template <typename T>
class ConvTranspose2d {
 public:
  ConvTranspose2d() = default;
  ConvTranspose2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride, ParamInit& init);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(ParameterList<T>& out, const std::string& prefix);

  Tensor<T> weight;  // [in, out, k, k]
  Tensor<T> bias;
  std::size_t stride = 2;
  std::size_t pad = 0;
  std::size_t output_pad = 0;
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in, std::size_t out, double init_std, ParamInit& init, bool with_bias = true);
  Tensor<T> forward(const Tensor<T>& x) const { return linear(x, weight, bias); }
  void collect(ParameterList<T>& out, const std::string& prefix);

  Tensor<T> weight;  // [in, out]
  Tensor<T> bias;
};

template <typename T>
class LayerNorm {
 public:
  LayerNorm() = default;
  explicit LayerNorm(std::size_t channels);
  Tensor<T> forward(const Tensor<T>& x) const { return layer_norm(x, gamma, beta, T(1e-5)); }
  void collect(ParameterList<T>& out, const std::string& prefix);

  Tensor<T> gamma, beta;
};

// ---------------------------------------------------------------------------
// GDN / IGDN
// ---------------------------------------------------------------------------

inline constexpr double kGdnBetaMin = 1e-6;

// beta = beta_raw^2 + beta_min and gamma = gamma_raw^2 keep the normalizer
// positive for any raw values.
template <typename T>
class Gdn {
 public:
  Gdn() = default;
  Gdn(std::size_t channels, bool inverse);
  Tensor<T> forward(const Tensor<T>& x) const;
  Tensor<T> effective_beta() const;
  Tensor<T> effective_gamma() const;
  void collect(ParameterList<T>& out, const std::string& prefix);

  Tensor<T> beta_raw;   // [C]
  Tensor<T> gamma_raw;  // [C, C]
  bool inverse = false;
};

// ---------------------------------------------------------------------------
// Windows
// ---------------------------------------------------------------------------

// [N,H,W,C] -> [N*(H/w)*(W/w), w*w, C], windows in row-major order.
template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, std::size_t window);
// Exact inverse of window_partition.
template <typename T>
Tensor<T> window_merge(const Tensor<T>& windows, std::size_t batch, std::size_t height, std::size_t width);
// Toroidal roll: out[y][x] = in[(y - dy) mod H][(x - dx) mod W].
template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, long dy, long dx);

// Additive logit mask [nW, T, T] for a shifted-window layout: 0 inside a
// region, -inf across regions.
template <typename T>
Tensor<T> shifted_window_mask(std::size_t height, std::size_t width, std::size_t window, std::size_t shift);

// ---------------------------------------------------------------------------
// Swin blocks
// ---------------------------------------------------------------------------

template <typename T>
class WindowAttention {
 public:
  WindowAttention() = default;
  WindowAttention(std::size_t channels, std::size_t heads, std::size_t window, ParamInit& init);

  // tokens [B,T,C]; mask [nW,T,T] with B a multiple of nW, or undefined.
  // Returns output tokens and attention weights [B, heads, T, T].
  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& tokens, const Tensor<T>& mask) const;
  void collect(ParameterList<T>& out, const std::string& prefix);

  std::size_t channels = 0, heads = 0, window = 0;
  Linear<T> qkv, proj;
  Tensor<T> rel_bias_table;  // [(2w-1)^2, heads]

 private:
  Tensor<T> relative_bias(std::size_t window_used) const;
};

template <typename T>
class SwinBlock {
 public:
  SwinBlock() = default;
  SwinBlock(std::size_t channels, std::size_t heads, std::size_t window, bool shifted, double ffn_ratio,
            ParamInit& init);

  // x [N,H,W,C] -> same shape.
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(ParameterList<T>& out, const std::string& prefix);

  // Window and shift actually used for a feature map: the window shrinks to
  // the map when the map is smaller, and shifting is skipped then.
  std::pair<std::size_t, std::size_t> layout_for(std::size_t height, std::size_t width) const;

  std::size_t window = 0;
  bool shifted = false;
  LayerNorm<T> norm1, norm2;
  WindowAttention<T> attn;
  Linear<T> fc1, fc2;

  // When enabled, forward() keeps the last attention weights for inspection.
  bool record_attention = false;
  mutable Tensor<T> last_attention;
  mutable Shape last_input_shape;
};

// W-MHSA block followed by SW-MHSA block.
template <typename T>
class SwinBlockPair {
 public:
  SwinBlockPair() = default;
  SwinBlockPair(std::size_t channels, std::size_t heads, std::size_t window, double ffn_ratio, ParamInit& init);
  Tensor<T> forward(const Tensor<T>& x) const { return shifted_block.forward(regular.forward(x)); }
  void collect(ParameterList<T>& out, const std::string& prefix);

  SwinBlock<T> regular, shifted_block;
};

// 2x2 neighbourhood -> 4C channels -> linear map (no bias).
template <typename T>
class PatchDownsample {
 public:
  PatchDownsample() = default;
  PatchDownsample(std::size_t in, std::size_t out, ParamInit& init);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(ParameterList<T>& out, const std::string& prefix);
  Linear<T> reduction;
};

// Linear map to 4*out channels, then each channel group fills one position of
// a 2x2 block (the inverse of PatchDownsample's arrangement).
template <typename T>
class PatchUpsample {
 public:
  PatchUpsample() = default;
  PatchUpsample(std::size_t in, std::size_t out, ParamInit& init);
  Tensor<T> forward(const Tensor<T>& x) const;
  void collect(ParameterList<T>& out, const std::string& prefix);
  Linear<T> expansion;
  std::size_t out_channels = 0;
};

// [N,H,W,C] -> [N,H/2,W/2,4C] and its inverse.
template <typename T>
Tensor<T> space_to_depth2(const Tensor<T>& x);
template <typename T>
Tensor<T> depth_to_space2(const Tensor<T>& x);

// NCHW <-> NHWC
template <typename T>
Tensor<T> to_channels_last(const Tensor<T>& x);
template <typename T>
Tensor<T> to_channels_first(const Tensor<T>& x);

// ---------------------------------------------------------------------------
// Spatial feature transform and conditions
// ---------------------------------------------------------------------------

template <typename T>
class Sft {
 public:
  Sft() = default;
  Sft(std::size_t condition_channels, std::size_t feature_channels, std::size_t kernel, ParamInit& init);
  // feature [N,C,H,W], condition [N,Cc,H,W] -> gamma * feature + beta
  Tensor<T> forward(const Tensor<T>& feature, const Tensor<T>& condition) const;
  void collect(ParameterList<T>& out, const std::string& prefix);

  Conv2d<T> gamma_head, beta_head;
};

// One condition tensor per SFT site, ordered like the sites.
template <typename T>
struct ConditionPyramid {
  std::vector<Tensor<T>> levels;
  std::vector<std::size_t> factors;  // downsample factor of each level w.r.t. the padded input
};

// Concatenated (mask, image) -> `depth` 3x3 convolutions with GELU between.
template <typename T>
class MaskFusion {
 public:
  MaskFusion() = default;
  MaskFusion(std::size_t out_channels, std::size_t depth, ParamInit& init);
  Tensor<T> forward(const Tensor<T>& image, const Tensor<T>& mask) const;
  void collect(ParameterList<T>& out, const std::string& prefix);

  std::vector<Conv2d<T>> convs;
};

// Validates the mask, fuses it with the image and average-pools the fused map
// down to every site factor.
template <typename T>
ConditionPyramid<T> mask_condition_path(const Tensor<T>& image, const Tensor<T>& mask, const MaskFusion<T>& fusion,
                                        const std::vector<std::size_t>& site_factors);

// Throws ValidationError unless every mask value lies in [0, 1].
template <typename T>
void validate_mask(const Tensor<T>& mask);

}  // namespace roicodec::nn
