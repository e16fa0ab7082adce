#pragma once

#include <vector>

#include "roicodec/nn/layers.hpp"

namespace roicodec::entropy {

inline constexpr double kLikelihoodFloor = 1e-9;

// Per-channel learned CDF for the hyper latent. Each channel runs a scalar
// through K affine stages (softplus-constrained matrices keep it monotone)
// with tanh gating between them; the sigmoid of the result is the CDF.
template <typename T>
class FactorizedPrior {
 public:
  FactorizedPrior() = default;
  FactorizedPrior(std::size_t channels, nn::ParamInit& init, std::vector<std::size_t> filters = {3, 3, 3});

  // z [N,C,H,W] -> logit of the CDF at every element.
  Tensor<T> cdf_logits(const Tensor<T>& z) const;
  // P(z_hat) = CDF(z_hat + 0.5) - CDF(z_hat - 0.5), floored.
  Tensor<T> likelihood(const Tensor<T>& z_hat) const;
  // Same network on a plain value, in double; used to build coder tables.
  double cdf_logit(std::size_t channel, double x) const;

  void collect(nn::ParameterList<T>& out, const std::string& prefix);

  std::size_t channels = 0;
  std::vector<Tensor<T>> matrices;  // stage k: [C, out_k, in_k], raw (softplus applied)
  std::vector<Tensor<T>> biases;    // [C, out_k, 1]
  std::vector<Tensor<T>> factors;   // [C, out_k, 1], all stages but the last
};

}  // namespace roicodec::entropy
