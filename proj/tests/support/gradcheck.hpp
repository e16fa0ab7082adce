#pragma once

// Central finite-difference oracle for autodiff gradients. Test-only; it
// evaluates the loss through the forward pass alone.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "roicodec/tensor/ops.hpp"

namespace roicodec::testing {

using LossFn = std::function<Tensor<double>()>;

inline Tensor<double> random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0,
                                    double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = u(rng);
  return Tensor<double>::from_data(shape, std::move(v), requires_grad);
}

// Weighted sum so that every output element carries a distinct gradient.
inline Tensor<double> probe(const Tensor<double>& out, std::mt19937_64& rng) {
  auto w = random_tensor(out.shape(), rng, -1.0, 1.0, false);
  return sum(mul(out, w));
}

struct GradCheckResult {
  double rel_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double max_abs = 0.0;
  std::size_t checked = 0;
};

// Compares d loss / d param against central differences with step h. When
// max_entries is nonzero only an evenly spaced subset of entries is perturbed.
inline GradCheckResult check_gradient(const LossFn& loss_fn, Tensor<double>& param, double h = 1e-4,
                                      std::size_t max_entries = 0) {
  param.zero_grad();
  auto loss = loss_fn();
  backward(loss);
  std::vector<double> analytic(param.numel(), 0.0);
  if (param.has_grad()) std::copy(param.grad().begin(), param.grad().end(), analytic.begin());

  const std::size_t n = param.numel();
  std::size_t stride = 1;
  if (max_entries && n > max_entries) stride = (n + max_entries - 1) / max_entries;
  double diff2 = 0, a2 = 0, n2 = 0;
  GradCheckResult r;
  auto data = param.mutable_data();
  for (std::size_t i = 0; i < n; i += stride) {
    const double orig = data[i];
    data[i] = orig + h;
    const double lp = loss_fn().item();
    data[i] = orig - h;
    const double lm = loss_fn().item();
    data[i] = orig;
    const double num = (lp - lm) / (2 * h);
    diff2 += (analytic[i] - num) * (analytic[i] - num);
    a2 += analytic[i] * analytic[i];
    n2 += num * num;
    r.max_abs = std::max(r.max_abs, std::abs(analytic[i] - num));
    ++r.checked;
  }
  const double denom = std::max({std::sqrt(a2), std::sqrt(n2), 1e-12});
  r.rel_error = std::sqrt(diff2) / denom;
  param.zero_grad();
  return r;
}

// Directional check over a set of parameters at once: compares grad . v with
// (L(theta + h v) - L(theta - h v)) / 2h for a random direction v with unit-scale
// entries, or unit overall length when `unit_norm` is set.
inline double check_directional(const LossFn& loss_fn, std::vector<Tensor<double>> params,
                                std::mt19937_64& rng, double h = 1e-4, bool unit_norm = false) {
  for (auto& p : params) p.zero_grad();
  auto loss = loss_fn();
  backward(loss);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<std::vector<double>> dirs;
  double analytic = 0.0;
  for (auto& p : params) {
    std::vector<double> v(p.numel());
    for (auto& x : v) x = nd(rng);
    if (p.has_grad())
      for (std::size_t i = 0; i < v.size(); ++i) analytic += p.grad()[i] * v[i];
    dirs.push_back(std::move(v));
  }
  if (unit_norm) {
    double n2 = 0;
    for (const auto& v : dirs)
      for (double x : v) n2 += x * x;
    const double inv = 1.0 / std::sqrt(n2);
    analytic *= inv;
    for (auto& v : dirs)
      for (auto& x : v) x *= inv;
  }
  auto shift = [&](double s) {
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto d = params[k].mutable_data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += s * dirs[k][i];
    }
  };
  std::vector<std::vector<double>> saved;
  for (auto& p : params) saved.emplace_back(p.data().begin(), p.data().end());
  shift(h);
  const double lp = loss_fn().item();
  for (std::size_t k = 0; k < params.size(); ++k) std::copy(saved[k].begin(), saved[k].end(), params[k].mutable_data().begin());
  shift(-h);
  const double lm = loss_fn().item();
  for (std::size_t k = 0; k < params.size(); ++k) {
    std::copy(saved[k].begin(), saved[k].end(), params[k].mutable_data().begin());
    params[k].zero_grad();
  }
  const double numeric = (lp - lm) / (2 * h);
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-12});
}

}  // namespace roicodec::testing
