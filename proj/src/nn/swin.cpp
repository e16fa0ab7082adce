#include <cmath>
#include <limits>
#include <mutex>

#include "index_cache.hpp"
#include "roicodec/nn/layers.hpp"

namespace roicodec::nn {

template <typename T>
Tensor<T> window_partition(const Tensor<T>& x, std::size_t w) {
  if (x.rank() != 4) throw DimensionError("window_partition expects [N,H,W,C]");
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  if (w == 0 || H % w || W % w)
    throw DimensionError("window_partition: " + shape_str(x.shape()) + " not divisible by window " + std::to_string(w));
  const std::size_t nh = H / w, nw = W / w;
  auto index = detail::cached_index(detail::key_of("wpart", {N, H, W, C, w}), [=] {
    std::vector<std::size_t> idx(N * H * W * C);
    std::size_t k = 0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t wy = 0; wy < nh; ++wy)
        for (std::size_t wx = 0; wx < nw; ++wx)
          for (std::size_t ty = 0; ty < w; ++ty)
            for (std::size_t tx = 0; tx < w; ++tx)
              for (std::size_t c = 0; c < C; ++c)
                idx[k++] = ((n * H + wy * w + ty) * W + wx * w + tx) * C + c;
    return idx;
  });
  return gather(x, {N * nh * nw, w * w, C}, index);
}

template <typename T>
Tensor<T> window_merge(const Tensor<T>& windows, std::size_t N, std::size_t H, std::size_t W) {
  if (windows.rank() != 3) throw DimensionError("window_merge expects [B,T,C]");
  const std::size_t T_ = windows.dim(1), C = windows.dim(2);
  const auto w = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(T_))));
  if (w * w != T_ || H % w || W % w || windows.dim(0) != N * (H / w) * (W / w))
    throw DimensionError("window_merge: " + shape_str(windows.shape()) + " does not tile " + std::to_string(H) + "x" +
                         std::to_string(W));
  const std::size_t nh = H / w, nw = W / w;
  auto index = detail::cached_index(detail::key_of("wmerge", {N, H, W, C, w}), [=] {
    std::vector<std::size_t> idx(N * H * W * C);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) {
          const std::size_t b = (n * nh + y / w) * nw + x / w;
          const std::size_t t = (y % w) * w + x % w;
          for (std::size_t c = 0; c < C; ++c) idx[((n * H + y) * W + x) * C + c] = (b * T_ + t) * C + c;
        }
    return idx;
  });
  return gather(windows, {N, H, W, C}, index);
}

template <typename T>
Tensor<T> cyclic_shift(const Tensor<T>& x, long dy, long dx) {
  if (x.rank() != 4) throw DimensionError("cyclic_shift expects [N,H,W,C]");
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const long Hl = static_cast<long>(H), Wl = static_cast<long>(W);
  const std::size_t sy = static_cast<std::size_t>(((dy % Hl) + Hl) % Hl);
  const std::size_t sx = static_cast<std::size_t>(((dx % Wl) + Wl) % Wl);
  if (sy == 0 && sx == 0) return x;
  auto index = detail::cached_index(detail::key_of("roll", {N, H, W, C, sy, sx}), [=] {
    std::vector<std::size_t> idx(N * H * W * C);
    std::size_t k = 0;
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx) {
          const std::size_t src_y = (y + H - sy) % H, src_x = (xx + W - sx) % W;
          for (std::size_t c = 0; c < C; ++c) idx[k++] = ((n * H + src_y) * W + src_x) * C + c;
        }
    return idx;
  });
  return gather(x, x.shape(), index);
}

template <typename T>
Tensor<T> shifted_window_mask(std::size_t H, std::size_t W, std::size_t w, std::size_t s) {
  if (w == 0 || H % w || W % w) throw DimensionError("shifted_window_mask: dims not divisible by window");
  // Label the three bands per axis that the roll brings together.
  auto band = [w, s](std::size_t v, std::size_t extent) -> std::size_t {
    if (v < extent - w) return 0;
    if (v < extent - s) return 1;
    return 2;
  };
  const std::size_t nh = H / w, nw = W / w, Tn = w * w;
  std::vector<T> m(nh * nw * Tn * Tn);
  std::vector<std::size_t> labels(Tn);
  for (std::size_t wy = 0; wy < nh; ++wy)
    for (std::size_t wx = 0; wx < nw; ++wx) {
      for (std::size_t t = 0; t < Tn; ++t)
        labels[t] = band(wy * w + t / w, H) * 3 + band(wx * w + t % w, W);
      T* dst = m.data() + (wy * nw + wx) * Tn * Tn;
      for (std::size_t i = 0; i < Tn; ++i)
        for (std::size_t j = 0; j < Tn; ++j)
          dst[i * Tn + j] = labels[i] == labels[j] ? T(0) : -std::numeric_limits<T>::infinity();
    }
  return Tensor<T>::from_data({nh * nw, Tn, Tn}, std::move(m));
}

// ---------------------------------------------------------------------------

template <typename T>
WindowAttention<T>::WindowAttention(std::size_t channels_, std::size_t heads_, std::size_t window_, ParamInit& init)
    : channels(channels_), heads(heads_), window(window_) {
  if (heads == 0 || channels % heads) throw ValidationError("attention: channels must be divisible by heads");
  qkv = Linear<T>(channels, 3 * channels, 0.02, init);
  proj = Linear<T>(channels, channels, 0.02, init);
  rel_bias_table = init.normal<T>({(2 * window - 1) * (2 * window - 1), heads}, 0.02);
}

template <typename T>
Tensor<T> WindowAttention<T>::relative_bias(std::size_t wu) const {
  const std::size_t w = window, h = heads, Tn = wu * wu;
  auto index = detail::cached_index(detail::key_of("relbias", {w, wu, h}), [=] {
    std::vector<std::size_t> idx(h * Tn * Tn);
    for (std::size_t head = 0; head < h; ++head)
      for (std::size_t i = 0; i < Tn; ++i)
        for (std::size_t j = 0; j < Tn; ++j) {
          const long dy = static_cast<long>(i / wu) - static_cast<long>(j / wu) + static_cast<long>(w) - 1;
          const long dx = static_cast<long>(i % wu) - static_cast<long>(j % wu) + static_cast<long>(w) - 1;
          const std::size_t r = static_cast<std::size_t>(dy) * (2 * w - 1) + static_cast<std::size_t>(dx);
          idx[(head * Tn + i) * Tn + j] = r * h + head;
        }
    return idx;
  });
  return gather(rel_bias_table, {h, Tn, Tn}, index);
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> WindowAttention<T>::forward(const Tensor<T>& tokens, const Tensor<T>& mask) const {
  if (tokens.rank() != 3 || tokens.dim(2) != channels)
    throw DimensionError("window attention: tokens " + shape_str(tokens.shape()) + " vs channels " +
                         std::to_string(channels));
  const std::size_t B = tokens.dim(0), Tn = tokens.dim(1), d = channels / heads;
  const auto wu = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(Tn))));
  if (wu * wu != Tn || wu > window) throw DimensionError("window attention: token count is not a window");

  auto packed = reshape(qkv.forward(tokens), {B, Tn, 3, heads, d});
  packed = permute(packed, {2, 0, 3, 1, 4});  // [3,B,h,T,d]
  auto q = reshape(slice(packed, 0, 0, 1), {B, heads, Tn, d});
  auto k = reshape(slice(packed, 0, 1, 1), {B, heads, Tn, d});
  auto v = reshape(slice(packed, 0, 2, 1), {B, heads, Tn, d});
  q = scale(q, static_cast<T>(1.0 / std::sqrt(static_cast<double>(d))));

  auto logits = add(matmul(q, k, true), relative_bias(wu));
  if (mask.defined()) {
    if (mask.rank() != 3 || mask.dim(1) != Tn || mask.dim(2) != Tn || B % mask.dim(0))
      throw DimensionError("window attention: mask " + shape_str(mask.shape()) + " vs tokens " +
                           shape_str(tokens.shape()));
    const std::size_t nW = mask.dim(0);
    // Repeat over heads so that the mask matches the trailing dims of the logits.
    std::vector<T> rep(nW * heads * Tn * Tn);
    const auto md = mask.data();
    for (std::size_t wi = 0; wi < nW; ++wi)
      for (std::size_t hh = 0; hh < heads; ++hh)
        std::copy(md.begin() + wi * Tn * Tn, md.begin() + (wi + 1) * Tn * Tn,
                  rep.begin() + (wi * heads + hh) * Tn * Tn);
    auto full_mask = Tensor<T>::from_data({nW, heads, Tn, Tn}, std::move(rep));
    logits = reshape(add(reshape(logits, {B / nW, nW, heads, Tn, Tn}), full_mask), {B, heads, Tn, Tn});
  }
  auto attn = softmax(logits, 3);
  auto out = matmul(attn, v);                                        // [B,h,T,d]
  out = reshape(permute(out, {0, 2, 1, 3}), {B, Tn, channels});      // [B,T,C]
  return {proj.forward(out), attn};
}

template <typename T>
void WindowAttention<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  qkv.collect(out, prefix + ".qkv");
  proj.collect(out, prefix + ".proj");
  out.push_back({prefix + ".rel_bias_table", rel_bias_table});
}

// ---------------------------------------------------------------------------

template <typename T>
SwinBlock<T>::SwinBlock(std::size_t channels, std::size_t heads, std::size_t window_, bool shifted_, double ffn_ratio,
                        ParamInit& init)
    : window(window_), shifted(shifted_), norm1(channels), norm2(channels) {
  attn = WindowAttention<T>(channels, heads, window, init);
  const auto hidden = static_cast<std::size_t>(std::lround(ffn_ratio * static_cast<double>(channels)));
  fc1 = Linear<T>(channels, hidden, 0.02, init);
  fc2 = Linear<T>(hidden, channels, 0.02, init);
}

template <typename T>
std::pair<std::size_t, std::size_t> SwinBlock<T>::layout_for(std::size_t H, std::size_t W) const {
  const std::size_t smallest = std::min(H, W);
  if (smallest <= window) return {smallest, 0};
  return {window, shifted ? window / 2 : 0};
}

template <typename T>
Tensor<T> SwinBlock<T>::forward(const Tensor<T>& x) const {
  if (x.rank() != 4) throw DimensionError("swin block expects [N,H,W,C]");
  const std::size_t N = x.dim(0), H = x.dim(1), W = x.dim(2);
  const auto [w, s] = layout_for(H, W);
  auto h = norm1.forward(x);
  if (s) h = cyclic_shift(h, -static_cast<long>(s), -static_cast<long>(s));
  auto windows = window_partition(h, w);
  Tensor<T> mask;
  if (s) {
    static std::mutex mutex;
    static std::map<std::string, Tensor<T>> masks;
    std::lock_guard<std::mutex> lock(mutex);
    const auto key = detail::key_of("mask", {H, W, w, s});
    auto it = masks.find(key);
    if (it == masks.end()) it = masks.emplace(key, shifted_window_mask<T>(H, W, w, s)).first;
    mask = it->second;
  }
  auto [attended, weights] = attn.forward(windows, mask);
  if (record_attention) {
    last_attention = weights.detach();
    last_input_shape = x.shape();
  }
  h = window_merge(attended, N, H, W);
  if (s) h = cyclic_shift(h, static_cast<long>(s), static_cast<long>(s));
  auto y = add(x, h);
  return add(y, fc2.forward(gelu(fc1.forward(norm2.forward(y)))));
}

template <typename T>
void SwinBlock<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  norm1.collect(out, prefix + ".norm1");
  attn.collect(out, prefix + ".attn");
  norm2.collect(out, prefix + ".norm2");
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

template <typename T>
SwinBlockPair<T>::SwinBlockPair(std::size_t channels, std::size_t heads, std::size_t window, double ffn_ratio,
                                ParamInit& init)
    : regular(channels, heads, window, false, ffn_ratio, init),
      shifted_block(channels, heads, window, true, ffn_ratio, init) {}

template <typename T>
void SwinBlockPair<T>::collect(ParameterList<T>& out, const std::string& prefix) {
  regular.collect(out, prefix + ".w");
  shifted_block.collect(out, prefix + ".sw");
}

#define ROICODEC_INSTANTIATE(T)                                                                  \
  template Tensor<T> window_partition(const Tensor<T>&, std::size_t);                           \
  template Tensor<T> window_merge(const Tensor<T>&, std::size_t, std::size_t, std::size_t);     \
  template Tensor<T> cyclic_shift(const Tensor<T>&, long, long);                                \
  template Tensor<T> shifted_window_mask<T>(std::size_t, std::size_t, std::size_t, std::size_t); \
  template class WindowAttention<T>;                                                             \
  template class SwinBlock<T>;                                                                   \
  template class SwinBlockPair<T>;

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec::nn
