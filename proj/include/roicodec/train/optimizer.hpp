#pragma once

#include <cstdint>
#include <vector>

#include "roicodec/nn/layers.hpp"

namespace roicodec::train {

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::uint64_t step = 0;
  std::vector<std::vector<double>> m, v;  // one per parameter, allocated on first step
};

// One bias-corrected Adam update. Every parameter must carry a gradient.
template <typename T>
void adam_step(nn::ParameterList<T>& params, AdamState& state, double lr);

// L2 norm over all parameter gradients (missing gradients count as zero).
template <typename T>
double global_grad_norm(const nn::ParameterList<T>& params);

// Rescales gradients so their global norm is at most max_norm; returns the
// norm before clipping.
template <typename T>
double clip_grad_norm(nn::ParameterList<T>& params, double max_norm);

template <typename T>
void zero_grad(nn::ParameterList<T>& params);

}  // namespace roicodec::train
