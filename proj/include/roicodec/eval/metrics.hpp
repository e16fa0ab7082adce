#pragma once

#include <cstdint>
#include <span>

#include "roicodec/tensor/tensor.hpp"

namespace roicodec::eval {

// Reported for a perfect reconstruction so CSV columns stay numeric.
inline constexpr double kPsnrCap = 99.0;
inline constexpr double kDefaultRoiThreshold = 0.5;

// 10 log10(1 / MSE) on [0,1] data; kPsnrCap when MSE is 0.
template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y);

// PSNR over pixels with mask >= threshold, all channels. The mask is
// [N,1,H,W] matching x. Throws ValidationError when no pixel is selected.
template <typename T>
double roi_psnr(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& mask,
                double threshold = kDefaultRoiThreshold);

// PSNR over pixels with mask < threshold (the complement of roi_psnr).
template <typename T>
double bg_psnr(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& mask,
               double threshold = kDefaultRoiThreshold);

// Container bits (header and payloads) per original pixel.
double bpp_measure(std::span<const std::uint8_t> bitstream, std::size_t height, std::size_t width);
// Same, with the original size taken from the container header.
double bpp_measure(std::span<const std::uint8_t> bitstream);

}  // namespace roicodec::eval
