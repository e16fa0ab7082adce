#include "roicodec/train/optimizer.hpp"

#include <cmath>

namespace roicodec::train {

template <typename T>
void adam_step(nn::ParameterList<T>& params, AdamState& state, double lr) {
  for (const auto& p : params)
    if (!p.tensor.has_grad()) throw ContractError("adam_step: parameter '" + p.name + "' has no gradient");
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.tensor.numel(), 0.0);
      state.v.emplace_back(p.tensor.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) throw ContractError("adam_step: optimizer state does not match parameters");
  ++state.step;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& t = params[k].tensor;
    auto& m = state.m[k];
    auto& v = state.v[k];
    if (m.size() != t.numel()) throw ContractError("adam_step: moment size mismatch for '" + params[k].name + "'");
    auto data = t.mutable_data();
    const auto g = t.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double gi = g[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * gi;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * gi * gi;
      const double mh = m[i] / c1, vh = v[i] / c2;
      data[i] = static_cast<T>(static_cast<double>(data[i]) - lr * mh / (std::sqrt(vh) + state.eps));
    }
  }
}

template <typename T>
double global_grad_norm(const nn::ParameterList<T>& params) {
  double s = 0;
  for (const auto& p : params)
    for (T g : p.tensor.grad()) s += static_cast<double>(g) * static_cast<double>(g);
  return std::sqrt(s);
}

template <typename T>
double clip_grad_norm(nn::ParameterList<T>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (norm > max_norm && norm > 0) {
    const double f = max_norm / norm;
    for (auto& p : params)
      if (p.tensor.has_grad())
        for (T& g : p.tensor.mutable_grad()) g = static_cast<T>(g * f);
  }
  return norm;
}

template <typename T>
void zero_grad(nn::ParameterList<T>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

#define ROICODEC_INSTANTIATE(T)                                               \
  template void adam_step(nn::ParameterList<T>&, AdamState&, double);         \
  template double global_grad_norm(const nn::ParameterList<T>&);              \
  template double clip_grad_norm(nn::ParameterList<T>&, double);              \
  template void zero_grad(nn::ParameterList<T>&);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec::train
