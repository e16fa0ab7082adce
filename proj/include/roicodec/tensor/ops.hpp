#pragma once

#include <memory>
#include <vector>

#include "roicodec/tensor/tensor.hpp"

namespace roicodec {

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T> Tensor<T> neg(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);
template <typename T> Tensor<T> sqrt(const Tensor<T>& x);
template <typename T> Tensor<T> square(const Tensor<T>& x);
template <typename T> Tensor<T> tanh(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> softplus(const Tensor<T>& x);
// tanh approximation of GELU; smooth everywhere, which the gradient checks need.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> scale(const Tensor<T>& x, T factor);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& x, T value);
// Gradient flows only where lo < x < hi.
template <typename T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);
// max(x, bound); gradient passes where x >= bound or where it would push x up.
template <typename T> Tensor<T> lower_bound(const Tensor<T>& x, T bound);
// Rounds half away from zero in the forward pass; identity gradient.
template <typename T> Tensor<T> round_ste(const Tensor<T>& x);

// `b` must have the same shape as `a` or equal its trailing dimensions
// (broadcast over leading batch dims only).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b);

// Explicit broadcast: every dim of `x` is 1 or equal to the target dim.
template <typename T> Tensor<T> expand(const Tensor<T>& x, const Shape& shape);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

// ---------------------------------------------------------------------------
// Layout
// ---------------------------------------------------------------------------

template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);

using IndexMap = std::shared_ptr<const std::vector<std::size_t>>;

// out[i] = x[index[i]]; the backward pass scatter-adds.
template <typename T> Tensor<T> gather(const Tensor<T>& x, const Shape& out_shape, IndexMap index);

// Edge-replicate an NCHW tensor on the bottom and right.
template <typename T>
Tensor<T> pad_replicate(const Tensor<T>& x, std::size_t pad_bottom, std::size_t pad_right);
// Top-left H x W crop of an NCHW tensor.
template <typename T> Tensor<T> crop(const Tensor<T>& x, std::size_t height, std::size_t width);

// ---------------------------------------------------------------------------
// Linear algebra and layers
// ---------------------------------------------------------------------------

// a: [..., M, K]; b: [..., K, N] with identical batch dims, or b: [K, N].
// With transpose_b, b is [..., N, K].
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b = false);

// x: [..., K], weight: [K, N], bias: [N] or undefined.
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

// input [N,C,H,W], kernel [O,C,k,k], bias [O] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad);

// input [N,C,H,W], kernel [C,O,k,k]; output H' = (H-1)*stride - 2*pad + k + output_pad.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                           std::size_t stride, std::size_t pad, std::size_t output_pad);

template <typename T> Tensor<T> avg_pool2d(const Tensor<T>& input, std::size_t k);
template <typename T> Tensor<T> upsample_nearest2d(const Tensor<T>& input, std::size_t factor);

// Normalizes over the last axis.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                     T eps = T(1e-5));

template <typename T> Tensor<T> softmax(const Tensor<T>& input, std::size_t axis);

// input [N,C,H,W]; beta [C] > 0, gamma [C,C] >= 0 (already reparameterized).
// y_i = x_i / sqrt(beta_i + sum_j gamma_ij x_j^2), or x_i * sqrt(...) when inverse.
template <typename T>
Tensor<T> gdn(const Tensor<T>& input, const Tensor<T>& beta, const Tensor<T>& gamma, bool inverse);

}  // namespace roicodec
