#include <cmath>

#include "roicodec/tensor/ops.hpp"
#include "tensor_internal.hpp"

namespace roicodec {

namespace {

// y = f(x); dx += g * df(x, y)
template <typename T, typename F, typename DF>
Tensor<T> unary(const Tensor<T>& x, F f, DF df) {
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = f(xs[i]);
  return make_result<T>(x.shape(), std::move(out), {&x}, [df](Node<T>& self) {
    Node<T>* p = self.parents[0].get();
    if (!p->requires_grad) return;
    auto& pg = p->grad_buffer();
    for (std::size_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i] * df(p->data[i], self.data[i]);
  });
}

// Leading-dim broadcast: b's shape equals a's shape or a's trailing dims.
template <typename T>
std::size_t broadcast_period(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  const auto& as = a.shape();
  const auto& bs = b.shape();
  bool ok = bs.size() <= as.size() && std::equal(bs.rbegin(), bs.rend(), as.rbegin());
  if (!ok) throw DimensionError(std::string(op) + ": cannot combine " + shape_str(as) + " with " + shape_str(bs));
  return b.numel();
}

template <typename T, typename F, typename DA, typename DB>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, const char* name, F f, DA da, DB db) {
  const std::size_t period = broadcast_period(a, b, name);
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i], bv[i % period]);
  return make_result<T>(a.shape(), std::move(out), {&a, &b}, [period, da, db](Node<T>& self) {
    Node<T>* pa = self.parents[0].get();
    Node<T>* pb = self.parents[1].get();
    const std::size_t n = self.grad.size();
    if (pa && pa->requires_grad) {
      auto& g = pa->grad_buffer();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[i] * da(pa->data[i], pb->data[i % period]);
    }
    if (pb && pb->requires_grad) {
      auto& g = pb->grad_buffer();
      for (std::size_t i = 0; i < n; ++i)
        g[i % period] += self.grad[i] * db(pa->data[i], pb->data[i % period]);
    }
  });
}

}  // namespace

template <typename T>
Tensor<T> neg(const Tensor<T>& x) {
  return unary(x, [](T v) { return -v; }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::sqrt(v); }, [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> square(const Tensor<T>& x) {
  return unary(x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::tanh(v); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(x, [](T v) { return detail::stable_sigmoid(v); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softplus(const Tensor<T>& x) {
  return unary(
      x, [](T v) { return v > T(20) ? v : std::log1p(std::exp(v)); },
      [](T v, T) { return detail::stable_sigmoid(v); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T k = T(0.044715);
  return unary(
      x,
      [](T v) { return T(0.5) * v * (T(1) + std::tanh(c * (v + k * v * v * v))); },
      [](T v, T) {
        T u = c * (v + k * v * v * v);
        T t = std::tanh(u);
        T du = c * (T(1) + T(3) * k * v * v);
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * du;
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  return unary(x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T value) {
  return unary(x, [value](T v) { return v + value; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  return unary(
      x, [lo, hi](T v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](T v, T) { return (v > lo && v < hi) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> lower_bound(const Tensor<T>& x, T bound) {
  const auto xs = x.data();
  std::vector<T> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = xs[i] < bound ? bound : xs[i];
  return make_result<T>(x.shape(), std::move(out), {&x}, [bound](Node<T>& self) {
    Node<T>* p = self.parents[0].get();
    auto& pg = p->grad_buffer();
    for (std::size_t i = 0; i < pg.size(); ++i) {
      const T g = self.grad[i];
      // Pass when above the bound, or when descent would raise x.
      if (p->data[i] >= bound || g < T(0)) pg[i] += g;
    }
  });
}

template <typename T>
Tensor<T> round_ste(const Tensor<T>& x) {
  return unary(x, [](T v) { return std::round(v); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      a, b, "div", [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> expand(const Tensor<T>& x, const Shape& shape) {
  const auto& xs = x.shape();
  if (xs.size() != shape.size())
    throw DimensionError("expand: rank mismatch " + shape_str(xs) + " -> " + shape_str(shape));
  for (std::size_t i = 0; i < xs.size(); ++i)
    if (xs[i] != shape[i] && xs[i] != 1)
      throw DimensionError("expand: cannot broadcast " + shape_str(xs) + " to " + shape_str(shape));
  const std::size_t n = shape_numel(shape);
  const std::size_t rank = shape.size();
  auto index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> src_stride(rank, 0);
  {
    std::size_t s = 1;
    for (std::size_t i = rank; i-- > 0;) {
      src_stride[i] = xs[i] == 1 ? 0 : s;
      s *= xs[i];
    }
  }
  std::vector<std::size_t> coord(rank, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < rank; ++i) src += coord[i] * src_stride[i];
    (*index)[flat] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++coord[i] < shape[i]) break;
      coord[i] = 0;
    }
  }
  return gather(x, shape, std::move(index));
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = T(0);
  for (T v : x.data()) s += v;
  return make_result<T>({}, {s}, {&x}, [](Node<T>& self) {
    Node<T>* p = self.parents[0].get();
    auto& pg = p->grad_buffer();
    const T g = self.grad[0];
    for (auto& v : pg) v += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

#define ROICODEC_INSTANTIATE(T)                                            \
  template Tensor<T> neg(const Tensor<T>&);                                \
  template Tensor<T> exp(const Tensor<T>&);                                \
  template Tensor<T> log(const Tensor<T>&);                                \
  template Tensor<T> sqrt(const Tensor<T>&);                               \
  template Tensor<T> square(const Tensor<T>&);                             \
  template Tensor<T> tanh(const Tensor<T>&);                               \
  template Tensor<T> sigmoid(const Tensor<T>&);                            \
  template Tensor<T> softplus(const Tensor<T>&);                           \
  template Tensor<T> gelu(const Tensor<T>&);                               \
  template Tensor<T> scale(const Tensor<T>&, T);                           \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                      \
  template Tensor<T> clamp(const Tensor<T>&, T, T);                        \
  template Tensor<T> lower_bound(const Tensor<T>&, T);                     \
  template Tensor<T> round_ste(const Tensor<T>&);                          \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> div(const Tensor<T>&, const Tensor<T>&);              \
  template Tensor<T> expand(const Tensor<T>&, const Shape&);               \
  template Tensor<T> sum(const Tensor<T>&);                                \
  template Tensor<T> mean(const Tensor<T>&);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec
