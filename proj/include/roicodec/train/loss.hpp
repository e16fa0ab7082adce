#pragma once

#include "roicodec/tensor/ops.hpp"

namespace roicodec::train {

template <typename T>
struct RdTerms {
  Tensor<T> loss;                  // weighted_distortion + bpp
  Tensor<T> weighted_distortion;   // (1/n_pixels) sum_i lambda_i * mean_c (x - x_rec)^2
  Tensor<T> bpp;                   // bits / n_pixels
};

// x, x_rec [N,3,H,W]; lmap [N,1,H,W]; bits is a scalar tensor >= 0.
// The rate term is not weighted by lambda.
template <typename T>
RdTerms<T> rd_loss(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& lmap, const Tensor<T>& bits,
                   std::size_t n_pixels);

}  // namespace roicodec::train
