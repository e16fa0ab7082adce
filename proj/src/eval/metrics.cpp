#include "roicodec/eval/metrics.hpp"

#include <cmath>

#include "roicodec/entropy/bitstream.hpp"

namespace roicodec::eval {

namespace {

enum class Select { All, Roi, Background };

template <typename T>
double masked_psnr(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>* mask, double threshold, Select sel) {
  if (x.shape() != y.shape()) throw DimensionError("psnr: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  if (x.rank() != 4) throw DimensionError("psnr expects [N,C,H,W], got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  if (mask && (mask->rank() != 4 || mask->dim(0) != N || mask->dim(1) != 1 || mask->dim(2) != x.dim(2) ||
               mask->dim(3) != x.dim(3)))
    throw DimensionError("psnr: mask " + shape_str(mask->shape()) + " does not match " + shape_str(x.shape()));
  const auto a = x.data(), b = y.data();
  double se = 0;
  std::size_t count = 0;
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < HW; ++i) {
        if (sel != Select::All) {
          const bool roi = static_cast<double>(mask->data()[n * HW + i]) >= threshold;
          if (roi != (sel == Select::Roi)) continue;
        }
        const double d = static_cast<double>(a[(n * C + c) * HW + i]) - static_cast<double>(b[(n * C + c) * HW + i]);
        se += d * d;
        ++count;
      }
  if (count == 0)
    throw ValidationError(sel == Select::Roi ? "roi_psnr: mask selects no pixel (degenerate ROI)"
                                             : "psnr: no pixel selected (degenerate mask)");
  const double mse = se / static_cast<double>(count);
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

}  // namespace

template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y) {
  return masked_psnr<T>(x, y, nullptr, 0.0, Select::All);
}

template <typename T>
double roi_psnr(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& mask, double threshold) {
  return masked_psnr(x, y, &mask, threshold, Select::Roi);
}

template <typename T>
double bg_psnr(const Tensor<T>& x, const Tensor<T>& y, const Tensor<T>& mask, double threshold) {
  return masked_psnr(x, y, &mask, threshold, Select::Background);
}

double bpp_measure(std::span<const std::uint8_t> bitstream, std::size_t height, std::size_t width) {
  if (height == 0 || width == 0) throw ContractError("bpp_measure: empty image size");
  return 8.0 * static_cast<double>(bitstream.size()) / static_cast<double>(height * width);
}

double bpp_measure(std::span<const std::uint8_t> bitstream) {
  const auto c = entropy::read_container(bitstream);
  return bpp_measure(bitstream, c.height, c.width);
}

#define ROICODEC_INSTANTIATE(T)                                                              \
  template double psnr(const Tensor<T>&, const Tensor<T>&);                                  \
  template double roi_psnr(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);    \
  template double bg_psnr(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec::eval
