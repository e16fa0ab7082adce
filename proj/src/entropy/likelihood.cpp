#include "roicodec/entropy/likelihood.hpp"

#include <cmath>
#include <numbers>

namespace roicodec::entropy {

QuantMode quant_mode_from_string(const std::string& text) {
  if (text == "noise") return QuantMode::Noise;
  if (text == "round") return QuantMode::Round;
  if (text == "ste") return QuantMode::Ste;
  throw ContractError("unknown quantization mode '" + text + "'");
}

template <typename T>
Tensor<T> quantize(const Tensor<T>& values, QuantMode mode, std::mt19937_64* rng, const Tensor<T>& offset) {
  switch (mode) {
    case QuantMode::Noise: {
      if (!rng) throw ContractError("quantize: noise mode needs a random generator");
      std::uniform_real_distribution<double> u(-0.5, 0.5);
      std::vector<T> noise(values.numel());
      for (auto& v : noise) v = static_cast<T>(u(*rng));
      return add(values, Tensor<T>::from_data(values.shape(), std::move(noise)));
    }
    case QuantMode::Round: {
      NoGradGuard guard;
      auto centered = offset.defined() ? sub(values, offset) : values;
      auto r = round_ste(centered);
      return (offset.defined() ? add(r, offset) : r).detach();
    }
    case QuantMode::Ste: {
      if (!offset.defined()) return round_ste(values);
      // round(v - o) + o; the offset passes through, so d/dv = 1.
      return add(round_ste(sub(values, offset.detach())), offset.detach());
    }
  }
  throw ContractError("quantize: unknown mode");
}

template <typename T>
Tensor<T> gaussian_likelihood(const Tensor<T>& y_hat, const Tensor<T>& mu, const Tensor<T>& sigma) {
  if (y_hat.shape() != mu.shape() || y_hat.shape() != sigma.shape())
    throw DimensionError("gaussian_likelihood: y " + shape_str(y_hat.shape()) + ", mu " + shape_str(mu.shape()) +
                         ", sigma " + shape_str(sigma.shape()));
  const std::size_t n = y_hat.numel();
  const double inv_sqrt2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  auto pdf = [&](double x) { return inv_sqrt2pi * std::exp(-0.5 * x * x); };
  std::vector<T> out(n);
  // Cached per element: d p / d (y - mu) and d p / d sigma, zero when floored.
  auto dp_dd = std::make_shared<std::vector<double>>(n);
  auto dp_ds = std::make_shared<std::vector<double>>(n);
  auto floored = std::make_shared<std::vector<char>>(n);
  const auto y = y_hat.data(), m = mu.data(), s = sigma.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(y[i]) - static_cast<double>(m[i]);
    const double sg = static_cast<double>(s[i]);
    const double v = std::abs(d);
    // Evaluate on the lower side of the bell where the CDF difference is accurate.
    const double upper = (0.5 - v) / sg, lower = (-0.5 - v) / sg;
    const double p = normal_cdf(upper) - normal_cdf(lower);
    if (p < kLikelihoodFloor) {
      out[i] = static_cast<T>(kLikelihoodFloor);
      (*floored)[i] = 1;
    } else {
      out[i] = static_cast<T>(p);
    }
    const double dp_dv = (-pdf(upper) + pdf(lower)) / sg;
    (*dp_dd)[i] = d > 0 ? dp_dv : (d < 0 ? -dp_dv : 0.0);
    (*dp_ds)[i] = -(pdf(upper) * upper - pdf(lower) * lower) / sg;
  }
  return make_result<T>(y_hat.shape(), std::move(out), {&y_hat, &mu, &sigma},
                        [dp_dd, dp_ds, floored, n](Node<T>& self) {
                          Node<T>* yn = self.parents[0].get();
                          Node<T>* mn = self.parents[1].get();
                          Node<T>* sn = self.parents[2].get();
                          for (std::size_t i = 0; i < n; ++i) {
                            const double g = static_cast<double>(self.grad[i]);
                            // Like lower_bound: a floored value still passes gradients that raise it.
                            if ((*floored)[i] && g >= 0.0) continue;
                            if (yn->requires_grad) yn->grad_buffer()[i] += static_cast<T>(g * (*dp_dd)[i]);
                            if (mn->requires_grad) mn->grad_buffer()[i] -= static_cast<T>(g * (*dp_dd)[i]);
                            if (sn->requires_grad) sn->grad_buffer()[i] += static_cast<T>(g * (*dp_ds)[i]);
                          }
                        });
}

template <typename T>
Tensor<T> rate_bits(const Tensor<T>& likelihoods) {
  return scale(sum(log(likelihoods)), static_cast<T>(-1.0 / std::numbers::ln2));
}

template <typename T>
double estimate_bits(const std::vector<Tensor<T>>& likelihoods) {
  double bits = 0.0;
  for (const auto& t : likelihoods)
    for (T p : t.data()) {
      if (!(p > T(0))) throw ContractError("estimate_bits: likelihood must be positive");
      bits -= std::log2(static_cast<double>(p));
    }
  return bits;
}

#define ROICODEC_INSTANTIATE(T)                                                                    \
  template Tensor<T> quantize(const Tensor<T>&, QuantMode, std::mt19937_64*, const Tensor<T>&);    \
  template Tensor<T> gaussian_likelihood(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);    \
  template Tensor<T> rate_bits(const Tensor<T>&);                                                  \
  template double estimate_bits(const std::vector<Tensor<T>>&);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec::entropy
