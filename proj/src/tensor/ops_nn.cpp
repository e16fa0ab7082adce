#include <cmath>
#include <limits>

#include "gemm.hpp"
#include "roicodec/tensor/ops.hpp"

namespace roicodec {

namespace {

struct MatmulDims {
  std::size_t batch, M, K, N;
  bool shared_b;
};

template <typename T>
MatmulDims matmul_dims(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.rank() < 2 || b.rank() < 2) throw DimensionError("matmul: operands need rank >= 2");
  const auto& as = a.shape();
  const auto& bs = b.shape();
  MatmulDims d{};
  d.M = as[as.size() - 2];
  d.K = as[as.size() - 1];
  const std::size_t bk = transpose_b ? bs[bs.size() - 1] : bs[bs.size() - 2];
  d.N = transpose_b ? bs[bs.size() - 2] : bs[bs.size() - 1];
  if (bk != d.K)
    throw DimensionError("matmul: inner dims differ " + shape_str(as) + " x " + shape_str(bs));
  d.batch = a.numel() / (d.M * d.K);
  d.shared_b = bs.size() == 2;
  if (!d.shared_b) {
    if (bs.size() != as.size() || !std::equal(as.begin(), as.end() - 2, bs.begin()))
      throw DimensionError("matmul: batch dims differ " + shape_str(as) + " x " + shape_str(bs));
  }
  return d;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  const MatmulDims d = matmul_dims(a, b, transpose_b);
  Shape shape = a.shape();
  shape.back() = d.N;
  std::vector<T> out(d.batch * d.M * d.N);
  const T* A = a.data().data();
  const T* B = b.data().data();
  const std::size_t b_step = d.shared_b ? 0 : d.K * d.N;
  if (d.shared_b && !transpose_b) {
    detail::gemm_nn(d.batch * d.M, d.N, d.K, A, B, out.data(), false);
  } else {
    for (std::size_t i = 0; i < d.batch; ++i) {
      if (transpose_b)
        detail::gemm_nt(d.M, d.N, d.K, A + i * d.M * d.K, B + i * b_step, out.data() + i * d.M * d.N, false);
      else
        detail::gemm_nn(d.M, d.N, d.K, A + i * d.M * d.K, B + i * b_step, out.data() + i * d.M * d.N, false);
    }
  }
  return make_result<T>(shape, std::move(out), {&a, &b}, [d, transpose_b, b_step](Node<T>& self) {
    Node<T>* pa = self.parents[0].get();
    Node<T>* pb = self.parents[1].get();
    const T* G = self.grad.data();
    const std::size_t mk = d.M * d.K, mn = d.M * d.N;
    if (pa && pa->requires_grad) {
      T* gA = pa->grad_buffer().data();
      const T* B = pb->data.data();
      for (std::size_t i = 0; i < d.batch; ++i) {
        // dA = G * B^T  (or G * B when b was transposed)
        if (transpose_b)
          detail::gemm_nn(d.M, d.K, d.N, G + i * mn, B + i * b_step, gA + i * mk, true);
        else
          detail::gemm_nt(d.M, d.K, d.N, G + i * mn, B + i * b_step, gA + i * mk, true);
      }
    }
    if (pb && pb->requires_grad) {
      T* gB = pb->grad_buffer().data();
      const T* A = pa->data.data();
      if (d.shared_b && !transpose_b) {
        detail::gemm_tn(d.K, d.N, d.batch * d.M, A, G, gB, true);
      } else {
        for (std::size_t i = 0; i < d.batch; ++i) {
          if (transpose_b)  // dB[N,K] = G^T A
            detail::gemm_tn(d.N, d.K, d.M, G + i * mn, A + i * mk, gB + i * b_step, true);
          else  // dB[K,N] = A^T G
            detail::gemm_tn(d.K, d.N, d.M, A + i * mk, G + i * mn, gB + i * b_step, true);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (weight.rank() != 2 || x.rank() < 1 || x.shape().back() != weight.dim(0))
    throw DimensionError("linear: " + shape_str(x.shape()) + " x " + shape_str(weight.shape()));
  const std::size_t K = weight.dim(0), N = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != N))
    throw DimensionError("linear: bias shape " + shape_str(bias.shape()));
  const std::size_t M = x.numel() / K;
  Shape shape = x.shape();
  shape.back() = N;
  std::vector<T> out(M * N);
  if (bias.defined()) {
    const auto bv = bias.data();
    for (std::size_t i = 0; i < M; ++i) std::copy(bv.begin(), bv.end(), out.begin() + i * N);
  }
  detail::gemm_nn(M, N, K, x.data().data(), weight.data().data(), out.data(), bias.defined());
  return make_result<T>(shape, std::move(out), {&x, &weight, &bias}, [M, N, K](Node<T>& self) {
    Node<T>* px = self.parents[0].get();
    Node<T>* pw = self.parents[1].get();
    Node<T>* pb = self.parents[2].get();
    const T* G = self.grad.data();
    if (px && px->requires_grad)
      detail::gemm_nt(M, K, N, G, pw->data.data(), px->grad_buffer().data(), true);
    if (pw && pw->requires_grad)
      detail::gemm_tn(K, N, M, px->data.data(), G, pw->grad_buffer().data(), true);
    if (pb && pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      for (std::size_t i = 0; i < M; ++i)
        for (std::size_t j = 0; j < N; ++j) gb[j] += G[i * N + j];
    }
  });
}

namespace {

struct ConvGeometry {
  std::size_t N, C, H, W, O, k, stride, pad, Ho, Wo;
  std::size_t cols_rows() const { return C * k * k; }
  std::size_t cols_cols() const { return Ho * Wo; }
};

// cols[(c*k + ky)*k + kx, oy*Wo + ox] = x[c, oy*s - p + ky, ox*s - p + kx]
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* cols) {
  const std::size_t P = g.Ho * g.Wo;
  for (std::size_t c = 0; c < g.C; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        T* row = cols + ((c * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.Ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          T* dst = row + oy * g.Wo;
          if (iy < 0 || iy >= static_cast<long>(g.H)) {
            std::fill(dst, dst + g.Wo, T(0));
            continue;
          }
          const T* src = x + (c * g.H + static_cast<std::size_t>(iy)) * g.W;
          for (std::size_t ox = 0; ox < g.Wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<long>(g.W)) ? T(0) : src[ix];
          }
        }
      }
}

template <typename T>
void col2im(const ConvGeometry& g, const T* cols, T* x) {
  const std::size_t P = g.Ho * g.Wo;
  for (std::size_t c = 0; c < g.C; ++c)
    for (std::size_t ky = 0; ky < g.k; ++ky)
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const T* row = cols + ((c * g.k + ky) * g.k + kx) * P;
        for (std::size_t oy = 0; oy < g.Ho; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.H)) continue;
          T* dst = x + (c * g.H + static_cast<std::size_t>(iy)) * g.W;
          const T* src = row + oy * g.Wo;
          for (std::size_t ox = 0; ox < g.Wo; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - static_cast<long>(g.pad);
            if (ix >= 0 && ix < static_cast<long>(g.W)) dst[ix] += src[ox];
          }
        }
      }
}

// Forward convolution on raw buffers: out[n] = W * im2col(x[n]) + bias.
template <typename T>
void conv_forward_raw(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* out) {
  std::vector<T> cols(g.cols_rows() * g.cols_cols());
  const std::size_t P = g.cols_cols();
  for (std::size_t n = 0; n < g.N; ++n) {
    im2col(g, x + n * g.C * g.H * g.W, cols.data());
    T* o = out + n * g.O * P;
    if (bias)
      for (std::size_t oc = 0; oc < g.O; ++oc) std::fill(o + oc * P, o + (oc + 1) * P, bias[oc]);
    detail::gemm_nn(g.O, P, g.cols_rows(), w, cols.data(), o, bias != nullptr);
  }
}

// Gradient w.r.t. the conv input, accumulated into gx.
template <typename T>
void conv_backward_input_raw(const ConvGeometry& g, const T* gout, const T* w, T* gx) {
  std::vector<T> cols(g.cols_rows() * g.cols_cols());
  const std::size_t P = g.cols_cols();
  for (std::size_t n = 0; n < g.N; ++n) {
    detail::gemm_tn(g.cols_rows(), P, g.O, w, gout + n * g.O * P, cols.data(), false);
    col2im(g, cols.data(), gx + n * g.C * g.H * g.W);
  }
}

template <typename T>
void conv_backward_weight_raw(const ConvGeometry& g, const T* gout, const T* x, T* gw) {
  std::vector<T> cols(g.cols_rows() * g.cols_cols());
  const std::size_t P = g.cols_cols();
  for (std::size_t n = 0; n < g.N; ++n) {
    im2col(g, x + n * g.C * g.H * g.W, cols.data());
    detail::gemm_nt(g.O, g.cols_rows(), P, gout + n * g.O * P, cols.data(), gw, true);
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 std::size_t stride, std::size_t pad) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw DimensionError("conv2d expects NCHW input and OCkk kernel");
  if (stride < 1) throw DimensionError("conv2d: stride must be >= 1");
  ConvGeometry g{};
  g.N = input.dim(0);
  g.C = input.dim(1);
  g.H = input.dim(2);
  g.W = input.dim(3);
  g.O = kernel.dim(0);
  g.k = kernel.dim(2);
  g.stride = stride;
  g.pad = pad;
  if (kernel.dim(1) != g.C || kernel.dim(3) != g.k)
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " vs input " + shape_str(input.shape()));
  if (g.k > g.H + 2 * pad || g.k > g.W + 2 * pad) throw DimensionError("conv2d: kernel larger than padded input");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.O)) throw DimensionError("conv2d: bias shape");
  g.Ho = (g.H + 2 * pad - g.k) / stride + 1;
  g.Wo = (g.W + 2 * pad - g.k) / stride + 1;

  std::vector<T> out(g.N * g.O * g.Ho * g.Wo);
  conv_forward_raw(g, input.data().data(), kernel.data().data(),
                   bias.defined() ? bias.data().data() : static_cast<const T*>(nullptr), out.data());
  return make_result<T>({g.N, g.O, g.Ho, g.Wo}, std::move(out), {&input, &kernel, &bias}, [g](Node<T>& self) {
    Node<T>* px = self.parents[0].get();
    Node<T>* pw = self.parents[1].get();
    Node<T>* pb = self.parents[2].get();
    const T* G = self.grad.data();
    if (px && px->requires_grad) conv_backward_input_raw(g, G, pw->data.data(), px->grad_buffer().data());
    if (pw && pw->requires_grad) conv_backward_weight_raw(g, G, px->data.data(), pw->grad_buffer().data());
    if (pb && pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      const std::size_t P = g.Ho * g.Wo;
      for (std::size_t n = 0; n < g.N; ++n)
        for (std::size_t o = 0; o < g.O; ++o) {
          T s = T(0);
          for (std::size_t p = 0; p < P; ++p) s += G[(n * g.O + o) * P + p];
          gb[o] += s;
        }
    }
  });
}

template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                           std::size_t stride, std::size_t pad, std::size_t output_pad) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw DimensionError("conv_transpose2d expects NCHW input and COkk kernel");
  if (stride < 1 || output_pad >= stride) throw DimensionError("conv_transpose2d: bad stride/output_pad");
  const std::size_t N = input.dim(0), Cin = input.dim(1), Hin = input.dim(2), Win = input.dim(3);
  if (kernel.dim(0) != Cin) throw DimensionError("conv_transpose2d: kernel/input channel mismatch");
  const std::size_t O = kernel.dim(1), k = kernel.dim(2);
  const long Hout_l = static_cast<long>((Hin - 1) * stride + k + output_pad) - 2 * static_cast<long>(pad);
  const long Wout_l = static_cast<long>((Win - 1) * stride + k + output_pad) - 2 * static_cast<long>(pad);
  if (Hout_l <= 0 || Wout_l <= 0) throw DimensionError("conv_transpose2d: empty output");
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != O)) throw DimensionError("conv_transpose2d: bias shape");

  // A transposed conv is the input-gradient of a forward conv whose input is the
  // output here. Geometry below describes that forward conv.
  ConvGeometry g{};
  g.N = N;
  g.C = O;
  g.H = static_cast<std::size_t>(Hout_l);
  g.W = static_cast<std::size_t>(Wout_l);
  g.O = Cin;
  g.k = k;
  g.stride = stride;
  g.pad = pad;
  g.Ho = Hin;
  g.Wo = Win;
  if ((g.H + 2 * pad - k) / stride + 1 != Hin || (g.W + 2 * pad - k) / stride + 1 != Win)
    throw DimensionError("conv_transpose2d: inconsistent geometry");

  std::vector<T> out(N * O * g.H * g.W, T(0));
  conv_backward_input_raw(g, input.data().data(), kernel.data().data(), out.data());
  if (bias.defined()) {
    const auto bv = bias.data();
    const std::size_t P = g.H * g.W;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o)
        for (std::size_t p = 0; p < P; ++p) out[(n * O + o) * P + p] += bv[o];
  }
  return make_result<T>({N, O, g.H, g.W}, std::move(out), {&input, &kernel, &bias}, [g](Node<T>& self) {
    Node<T>* px = self.parents[0].get();
    Node<T>* pw = self.parents[1].get();
    Node<T>* pb = self.parents[2].get();
    const T* G = self.grad.data();
    if (px && px->requires_grad) {
      std::vector<T> tmp(g.N * g.O * g.Ho * g.Wo);
      conv_forward_raw(g, G, pw->data.data(), static_cast<const T*>(nullptr), tmp.data());
      auto& gx = px->grad_buffer();
      for (std::size_t i = 0; i < tmp.size(); ++i) gx[i] += tmp[i];
    }
    if (pw && pw->requires_grad) conv_backward_weight_raw(g, px->data.data(), G, pw->grad_buffer().data());
    if (pb && pb->requires_grad) {
      auto& gb = pb->grad_buffer();
      const std::size_t P = g.H * g.W;
      for (std::size_t n = 0; n < g.N; ++n)
        for (std::size_t o = 0; o < g.C; ++o) {
          T s = T(0);
          for (std::size_t p = 0; p < P; ++p) s += G[(n * g.C + o) * P + p];
          gb[o] += s;
        }
    }
  });
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& input, std::size_t k) {
  if (input.rank() != 4) throw DimensionError("avg_pool2d expects NCHW");
  const std::size_t NC = input.dim(0) * input.dim(1), H = input.dim(2), W = input.dim(3);
  if (k == 0 || H % k != 0 || W % k != 0)
    throw DimensionError("avg_pool2d: " + shape_str(input.shape()) + " not divisible by " + std::to_string(k));
  const std::size_t Ho = H / k, Wo = W / k;
  const T inv = T(1) / static_cast<T>(k * k);
  const auto x = input.data();
  std::vector<T> out(NC * Ho * Wo, T(0));
  for (std::size_t c = 0; c < NC; ++c)
    for (std::size_t oy = 0; oy < Ho; ++oy)
      for (std::size_t ox = 0; ox < Wo; ++ox) {
        T s = T(0);
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx) s += x[(c * H + oy * k + dy) * W + ox * k + dx];
        out[(c * Ho + oy) * Wo + ox] = s * inv;
      }
  return make_result<T>({input.dim(0), input.dim(1), Ho, Wo}, std::move(out), {&input},
                        [NC, H, W, Ho, Wo, k, inv](Node<T>& self) {
                          auto& g = self.parents[0]->grad_buffer();
                          for (std::size_t c = 0; c < NC; ++c)
                            for (std::size_t y = 0; y < H; ++y)
                              for (std::size_t xx = 0; xx < W; ++xx)
                                g[(c * H + y) * W + xx] += self.grad[(c * Ho + y / k) * Wo + xx / k] * inv;
                        });
}

template <typename T>
Tensor<T> upsample_nearest2d(const Tensor<T>& input, std::size_t factor) {
  if (input.rank() != 4 || factor == 0) throw DimensionError("upsample_nearest2d expects NCHW");
  const std::size_t N = input.dim(0), C = input.dim(1), H = input.dim(2), W = input.dim(3);
  const std::size_t Ho = H * factor, Wo = W * factor;
  auto index = std::make_shared<std::vector<std::size_t>>(N * C * Ho * Wo);
  std::size_t i = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t x = 0; x < Wo; ++x) (*index)[i++] = (nc * H + y / factor) * W + x / factor;
  return gather(input, {N, C, Ho, Wo}, std::move(index));
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (!(eps > T(0))) throw ContractError("layer_norm: eps must be positive");
  if (input.rank() < 1) throw DimensionError("layer_norm: scalar input");
  const std::size_t C = input.shape().back();
  if (gamma.numel() != C || beta.numel() != C) throw DimensionError("layer_norm: affine params must have C entries");
  const std::size_t rows = input.numel() / C;
  const auto x = input.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  std::vector<T> out(x.size());
  // Normalized values and inverse std are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<T>>(x.size());
  auto rstd = std::make_shared<std::vector<T>>(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.data() + r * C;
    T m = T(0);
    for (std::size_t c = 0; c < C; ++c) m += xr[c];
    m /= static_cast<T>(C);
    T v = T(0);
    for (std::size_t c = 0; c < C; ++c) v += (xr[c] - m) * (xr[c] - m);
    v /= static_cast<T>(C);
    const T rs = T(1) / std::sqrt(v + eps);
    (*rstd)[r] = rs;
    for (std::size_t c = 0; c < C; ++c) {
      const T h = (xr[c] - m) * rs;
      (*xhat)[r * C + c] = h;
      out[r * C + c] = h * gm[c] + bt[c];
    }
  }
  return make_result<T>(input.shape(), std::move(out), {&input, &gamma, &beta},
                        [rows, C, xhat, rstd](Node<T>& self) {
                          Node<T>* px = self.parents[0].get();
                          Node<T>* pg = self.parents[1].get();
                          Node<T>* pb = self.parents[2].get();
                          const T* G = self.grad.data();
                          if (pg && pg->requires_grad) {
                            auto& g = pg->grad_buffer();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < C; ++c) g[c] += G[r * C + c] * (*xhat)[r * C + c];
                          }
                          if (pb && pb->requires_grad) {
                            auto& g = pb->grad_buffer();
                            for (std::size_t r = 0; r < rows; ++r)
                              for (std::size_t c = 0; c < C; ++c) g[c] += G[r * C + c];
                          }
                          if (px && px->requires_grad) {
                            auto& g = px->grad_buffer();
                            const T* gm = pg->data.data();
                            const T invC = T(1) / static_cast<T>(C);
                            for (std::size_t r = 0; r < rows; ++r) {
                              T s1 = T(0), s2 = T(0);
                              for (std::size_t c = 0; c < C; ++c) {
                                const T d = G[r * C + c] * gm[c];
                                s1 += d;
                                s2 += d * (*xhat)[r * C + c];
                              }
                              for (std::size_t c = 0; c < C; ++c) {
                                const T d = G[r * C + c] * gm[c];
                                g[r * C + c] += (*rstd)[r] * (d - s1 * invC - (*xhat)[r * C + c] * s2 * invC);
                              }
                            }
                          }
                        });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& input, std::size_t axis) {
  if (axis >= input.rank()) throw DimensionError("softmax: axis out of range");
  const auto& s = input.shape();
  std::size_t outer = 1, inner = 1;
  const std::size_t L = s[axis];
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const auto x = input.data();
  std::vector<T> out(x.size());
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * L * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t l = 0; l < L; ++l) mx = std::max(mx, x[base + l * inner]);
      T z = T(0);
      for (std::size_t l = 0; l < L; ++l) {
        const T e = std::exp(x[base + l * inner] - mx);
        out[base + l * inner] = e;
        z += e;
      }
      const T iz = T(1) / z;
      for (std::size_t l = 0; l < L; ++l) out[base + l * inner] *= iz;
    }
  return make_result<T>(s, std::move(out), {&input}, [outer, inner, L](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const T* y = self.data.data();
    const T* G = self.grad.data();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * L * inner + in;
        T dot = T(0);
        for (std::size_t l = 0; l < L; ++l) dot += G[base + l * inner] * y[base + l * inner];
        for (std::size_t l = 0; l < L; ++l) {
          const std::size_t i = base + l * inner;
          g[i] += y[i] * (G[i] - dot);
        }
      }
  });
}

template <typename T>
Tensor<T> gdn(const Tensor<T>& input, const Tensor<T>& beta, const Tensor<T>& gamma, bool inverse) {
  if (input.rank() != 4) throw DimensionError("gdn expects NCHW");
  const std::size_t N = input.dim(0), C = input.dim(1), P = input.dim(2) * input.dim(3);
  if (beta.numel() != C || gamma.rank() != 2 || gamma.dim(0) != C || gamma.dim(1) != C)
    throw DimensionError("gdn: parameter shapes do not match " + std::to_string(C) + " channels");
  const auto x = input.data();
  // norm[n,i,p] = beta_i + sum_j gamma_ij x[n,j,p]^2
  auto norm = std::make_shared<std::vector<T>>(x.size());
  std::vector<T> sq(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) sq[i] = x[i] * x[i];
  for (std::size_t n = 0; n < N; ++n) {
    T* nb = norm->data() + n * C * P;
    for (std::size_t i = 0; i < C; ++i) std::fill(nb + i * P, nb + (i + 1) * P, beta.data()[i]);
    detail::gemm_nn(C, P, C, gamma.data().data(), sq.data() + n * C * P, nb, true);
  }
  std::vector<T> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const T r = std::sqrt((*norm)[i]);
    out[i] = inverse ? x[i] * r : x[i] / r;
  }
  return make_result<T>(input.shape(), std::move(out), {&input, &beta, &gamma},
                        [N, C, P, norm, inverse](Node<T>& self) {
                          Node<T>* px = self.parents[0].get();
                          Node<T>* pb = self.parents[1].get();
                          Node<T>* pg = self.parents[2].get();
                          const T* x = px->data.data();
                          const T* G = self.grad.data();
                          const std::size_t total = N * C * P;
                          // dL/dnorm: forward y = x * norm^(-1/2) -> -0.5 g x norm^(-3/2)
                          //           inverse y = x * norm^(1/2)  ->  0.5 g x norm^(-1/2)
                          std::vector<T> dnorm(total);
                          for (std::size_t i = 0; i < total; ++i) {
                            const T nv = (*norm)[i];
                            const T r = std::sqrt(nv);
                            dnorm[i] = inverse ? T(0.5) * G[i] * x[i] / r : T(-0.5) * G[i] * x[i] / (nv * r);
                          }
                          if (pb && pb->requires_grad) {
                            auto& gb = pb->grad_buffer();
                            for (std::size_t n = 0; n < N; ++n)
                              for (std::size_t c = 0; c < C; ++c) {
                                T s = T(0);
                                for (std::size_t p = 0; p < P; ++p) s += dnorm[(n * C + c) * P + p];
                                gb[c] += s;
                              }
                          }
                          std::vector<T> sq(total);
                          for (std::size_t i = 0; i < total; ++i) sq[i] = x[i] * x[i];
                          if (pg && pg->requires_grad) {
                            T* gg = pg->grad_buffer().data();
                            for (std::size_t n = 0; n < N; ++n)
                              detail::gemm_nt(C, C, P, dnorm.data() + n * C * P, sq.data() + n * C * P, gg, true);
                          }
                          if (px && px->requires_grad) {
                            auto& gx = px->grad_buffer();
                            // sum_i dnorm_i gamma_ij, then * 2 x_j
                            std::vector<T> back(C * P);
                            for (std::size_t n = 0; n < N; ++n) {
                              detail::gemm_tn(C, P, C, pg->data.data(), dnorm.data() + n * C * P, back.data(), false);
                              for (std::size_t i = 0; i < C * P; ++i) {
                                const std::size_t idx = n * C * P + i;
                                const T r = std::sqrt((*norm)[idx]);
                                const T direct = inverse ? G[idx] * r : G[idx] / r;
                                gx[idx] += direct + T(2) * x[idx] * back[i];
                              }
                            }
                          }
                        });
}

#define ROICODEC_INSTANTIATE(T)                                                                             \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool);                                      \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t); \
  template Tensor<T> conv_transpose2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t,    \
                                      std::size_t, std::size_t);                                            \
  template Tensor<T> avg_pool2d(const Tensor<T>&, std::size_t);                                             \
  template Tensor<T> upsample_nearest2d(const Tensor<T>&, std::size_t);                                     \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);                   \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                                \
  template Tensor<T> gdn(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, bool);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec
