#include "roicodec/entropy/factorized.hpp"

#include <cmath>

namespace roicodec::entropy {

namespace {
constexpr double kInitScale = 10.0;

double softplus_d(double x) { return x > 20.0 ? x : std::log1p(std::exp(x)); }
}  // namespace

template <typename T>
FactorizedPrior<T>::FactorizedPrior(std::size_t channels_, nn::ParamInit& init, std::vector<std::size_t> filters)
    : channels(channels_) {
  std::vector<std::size_t> dims{1};
  dims.insert(dims.end(), filters.begin(), filters.end());
  dims.push_back(1);
  const std::size_t K = dims.size() - 1;
  const double scale = std::pow(kInitScale, 1.0 / static_cast<double>(K));
  for (std::size_t k = 0; k < K; ++k) {
    const std::size_t in = dims[k], out = dims[k + 1];
    // softplus(raw) starts at 1 / (scale * out), so the composite begins as a
    // wide logistic CDF.
    const double raw = std::log(std::expm1(1.0 / scale / static_cast<double>(out)));
    matrices.push_back(init.constant<T>({channels, out, in}, raw));
    biases.push_back(init.uniform<T>({channels, out, 1}, -0.5, 0.5));
    if (k + 1 < K) factors.push_back(init.constant<T>({channels, out, 1}, 0.0));
  }
}

template <typename T>
Tensor<T> FactorizedPrior<T>::cdf_logits(const Tensor<T>& z) const {
  if (z.rank() != 4 || z.dim(1) != channels)
    throw DimensionError("factorized prior: expected [N," + std::to_string(channels) + ",H,W], got " +
                         shape_str(z.shape()));
  const std::size_t N = z.dim(0), H = z.dim(2), W = z.dim(3), M = N * H * W;
  auto x = reshape(permute(z, {1, 0, 2, 3}), {channels, 1, M});
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    const std::size_t out = matrices[k].dim(1);
    x = matmul(softplus(matrices[k]), x);
    x = add(x, expand(biases[k], {channels, out, M}));
    if (k < factors.size()) x = add(x, mul(expand(tanh(factors[k]), {channels, out, M}), tanh(x)));
  }
  return permute(reshape(x, {channels, N, H, W}), {1, 0, 2, 3});
}

template <typename T>
Tensor<T> FactorizedPrior<T>::likelihood(const Tensor<T>& z_hat) const {
  auto lower = cdf_logits(add_scalar(z_hat, T(-0.5)));
  auto upper = cdf_logits(add_scalar(z_hat, T(0.5)));
  // Evaluate in the tail that keeps the sigmoid difference well conditioned.
  std::vector<T> sign(lower.numel());
  for (std::size_t i = 0; i < sign.size(); ++i) sign[i] = lower.data()[i] + upper.data()[i] > T(0) ? T(-1) : T(1);
  auto s = Tensor<T>::from_data(lower.shape(), std::move(sign));
  auto p = mul(s, sub(sigmoid(mul(s, upper)), sigmoid(mul(s, lower))));
  return lower_bound(p, static_cast<T>(kLikelihoodFloor));
}

template <typename T>
double FactorizedPrior<T>::cdf_logit(std::size_t c, double value) const {
  std::vector<double> x{value};
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    const std::size_t out = matrices[k].dim(1), in = matrices[k].dim(2);
    const auto m = matrices[k].data().subspan(c * out * in, out * in);
    const auto b = biases[k].data().subspan(c * out, out);
    std::vector<double> y(out);
    for (std::size_t o = 0; o < out; ++o) {
      double acc = 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += softplus_d(static_cast<double>(m[o * in + i])) * x[i];
      y[o] = acc + static_cast<double>(b[o]);
    }
    if (k < factors.size()) {
      const auto f = factors[k].data().subspan(c * out, out);
      for (std::size_t o = 0; o < out; ++o) y[o] += std::tanh(static_cast<double>(f[o])) * std::tanh(y[o]);
    }
    x = std::move(y);
  }
  return x[0];
}

template <typename T>
void FactorizedPrior<T>::collect(nn::ParameterList<T>& out, const std::string& prefix) {
  for (std::size_t k = 0; k < matrices.size(); ++k) {
    const std::string s = std::to_string(k);
    out.push_back({prefix + ".matrix" + s, matrices[k]});
    out.push_back({prefix + ".bias" + s, biases[k]});
    if (k < factors.size()) out.push_back({prefix + ".factor" + s, factors[k]});
  }
}

template class FactorizedPrior<float>;
template class FactorizedPrior<double>;

}  // namespace roicodec::entropy
