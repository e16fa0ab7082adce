#pragma once

#include <random>
#include <string>
#include <vector>

#include "roicodec/entropy/factorized.hpp"

namespace roicodec::entropy {

enum class QuantMode { Noise, Round, Ste };

QuantMode quant_mode_from_string(const std::string& text);

// Rounds half away from zero; the one rounding rule used for coding.
inline double round_half_away(double v) { return std::round(v); }

// noise: values + U(-0.5, 0.5) drawn from `rng` (required).
// round: round(values - offset) + offset, cut from the tape.
// ste:   same forward as round, identity gradient.
// `offset` may be undefined (zero).
template <typename T>
Tensor<T> quantize(const Tensor<T>& values, QuantMode mode, std::mt19937_64* rng = nullptr,
                   const Tensor<T>& offset = Tensor<T>());

// P(y_hat) under N(mu, sigma) integrated over [y_hat - 0.5, y_hat + 0.5],
// floored at kLikelihoodFloor. Differentiable in all three inputs.
template <typename T>
Tensor<T> gaussian_likelihood(const Tensor<T>& y_hat, const Tensor<T>& mu, const Tensor<T>& sigma);

// -sum log2(p) as a differentiable scalar.
template <typename T>
Tensor<T> rate_bits(const Tensor<T>& likelihoods);

// -sum log2(p) over all tensors, in double. Throws ContractError on p <= 0.
template <typename T>
double estimate_bits(const std::vector<Tensor<T>>& likelihoods);

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace roicodec::entropy
