#include "roicodec/train/loss.hpp"

namespace roicodec::train {

template <typename T>
RdTerms<T> rd_loss(const Tensor<T>& x, const Tensor<T>& x_rec, const Tensor<T>& lmap, const Tensor<T>& bits,
                   std::size_t n_pixels) {
  if (x.shape() != x_rec.shape() || x.rank() != 4)
    throw DimensionError("rd_loss: x " + shape_str(x.shape()) + " vs x_rec " + shape_str(x_rec.shape()));
  if (lmap.rank() != 4 || lmap.dim(0) != x.dim(0) || lmap.dim(1) != 1 || lmap.dim(2) != x.dim(2) ||
      lmap.dim(3) != x.dim(3))
    throw DimensionError("rd_loss: lambda map " + shape_str(lmap.shape()) + " does not match " + shape_str(x.shape()));
  if (bits.numel() != 1) throw DimensionError("rd_loss: bits must be a scalar");
  if (!(bits.item() >= T(0))) throw ContractError("rd_loss: bits must be >= 0");
  if (n_pixels == 0) throw ContractError("rd_loss: n_pixels must be positive");

  const T channels = static_cast<T>(x.dim(1));
  auto err = square(sub(x_rec, x));
  auto weighted = sum(mul(err, expand(lmap, x.shape())));
  RdTerms<T> r;
  r.weighted_distortion = scale(weighted, T(1) / (channels * static_cast<T>(n_pixels)));
  r.bpp = scale(reshape(bits, {}), T(1) / static_cast<T>(n_pixels));
  r.loss = add(r.weighted_distortion, r.bpp);
  return r;
}

template RdTerms<float> rd_loss(const Tensor<float>&, const Tensor<float>&, const Tensor<float>&,
                                const Tensor<float>&, std::size_t);
template RdTerms<double> rd_loss(const Tensor<double>&, const Tensor<double>&, const Tensor<double>&,
                                 const Tensor<double>&, std::size_t);

}  // namespace roicodec::train
