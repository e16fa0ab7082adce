#include <numeric>

#include "roicodec/tensor/ops.hpp"

namespace roicodec {

namespace {

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> s(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) s[i - 1] = s[i] * shape[i];
  return s;
}

}  // namespace

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
  std::vector<T> out(x.data().begin(), x.data().end());
  return make_result<T>(shape, std::move(out), {&x}, [](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order) {
  const auto& in = x.shape();
  const std::size_t rank = in.size();
  if (order.size() != rank) throw DimensionError("permute: order rank mismatch");
  std::vector<bool> seen(rank, false);
  for (auto o : order) {
    if (o >= rank || seen[o]) throw DimensionError("permute: invalid axis order");
    seen[o] = true;
  }
  Shape out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in[order[i]];
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) step[i] = in_strides[order[i]];

  const std::size_t n = x.numel();
  auto index = std::make_shared<std::vector<std::size_t>>(n);
  std::vector<std::size_t> coord(rank, 0);
  std::size_t src = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    (*index)[flat] = src;
    for (std::size_t i = rank; i-- > 0;) {
      if (++coord[i] < out_shape[i]) {
        src += step[i];
        break;
      }
      src -= step[i] * (out_shape[i] - 1);
      coord[i] = 0;
    }
  }
  return gather(x, out_shape, std::move(index));
}

template <typename T>
Tensor<T> gather(const Tensor<T>& x, const Shape& out_shape, IndexMap index) {
  const std::size_t n = shape_numel(out_shape);
  if (!index || index->size() != n) throw DimensionError("gather: index map size mismatch");
  const auto xs = x.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t s = (*index)[i];
    if (s >= xs.size()) throw DimensionError("gather: index out of range");
    out[i] = xs[s];
  }
  return make_result<T>(out_shape, std::move(out), {&x}, [index](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    const auto& idx = *index;
    for (std::size_t i = 0; i < idx.size(); ++i) g[idx[i]] += self.grad[i];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  Shape shape = parts[0].shape();
  if (axis >= shape.size()) throw DimensionError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto& s = p.shape();
    if (s.size() != shape.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != shape[i])
        throw DimensionError("concat: " + shape_str(s) + " vs " + shape_str(shape));
    total += s[axis];
  }
  shape[axis] = total;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) inner *= shape[i];

  std::vector<T> out(shape_numel(shape));
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[axis] * inner;
    const auto d = p.data();
    for (std::size_t o = 0; o < outer; ++o)
      std::copy(d.begin() + o * w, d.begin() + (o + 1) * w, out.begin() + o * total * inner + offset);
    offset += w;
    widths.push_back(w);
  }

  auto node_out = make_result<T>(shape, std::move(out), {}, {});
  // make_result takes a fixed parent list; wire the variadic parents here.
  bool any = false;
  for (const auto& p : parts) any = any || p.requires_grad();
  if (any && grad_mode_enabled()) {
    Node<T>* n = node_out.node();
    n->requires_grad = true;
    for (const auto& p : parts) n->parents.push_back(p.node_ptr());
    const std::size_t row = total * inner;
    n->backward = [widths, outer, row](Node<T>& self) {
      std::size_t off = 0;
      for (std::size_t k = 0; k < self.parents.size(); ++k) {
        Node<T>* p = self.parents[k].get();
        const std::size_t w = widths[k];
        if (p->requires_grad) {
          auto& g = p->grad_buffer();
          for (std::size_t o = 0; o < outer; ++o)
            for (std::size_t j = 0; j < w; ++j) g[o * w + j] += self.grad[o * row + off + j];
        }
        off += w;
      }
    };
  }
  return node_out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
  const auto& in = x.shape();
  if (axis >= in.size() || start + length > in[axis])
    throw DimensionError("slice: range out of bounds for " + shape_str(in));
  Shape shape = in;
  shape[axis] = length;
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= in[i];
  for (std::size_t i = axis + 1; i < in.size(); ++i) inner *= in[i];
  const std::size_t src_row = in[axis] * inner, dst_row = length * inner, off = start * inner;
  const auto d = x.data();
  std::vector<T> out(outer * dst_row);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(d.begin() + o * src_row + off, d.begin() + o * src_row + off + dst_row, out.begin() + o * dst_row);
  return make_result<T>(shape, std::move(out), {&x}, [outer, src_row, dst_row, off](Node<T>& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t j = 0; j < dst_row; ++j) g[o * src_row + off + j] += self.grad[o * dst_row + j];
  });
}

template <typename T>
Tensor<T> pad_replicate(const Tensor<T>& x, std::size_t pad_bottom, std::size_t pad_right) {
  if (x.rank() != 4) throw DimensionError("pad_replicate expects NCHW");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H == 0 || W == 0) throw DimensionError("pad_replicate: empty spatial dims");
  const std::size_t Ho = H + pad_bottom, Wo = W + pad_right;
  auto index = std::make_shared<std::vector<std::size_t>>(N * C * Ho * Wo);
  std::size_t k = 0;
  for (std::size_t nc = 0; nc < N * C; ++nc)
    for (std::size_t y = 0; y < Ho; ++y)
      for (std::size_t xx = 0; xx < Wo; ++xx)
        (*index)[k++] = nc * H * W + std::min(y, H - 1) * W + std::min(xx, W - 1);
  return gather(x, {N, C, Ho, Wo}, std::move(index));
}

template <typename T>
Tensor<T> crop(const Tensor<T>& x, std::size_t height, std::size_t width) {
  if (x.rank() != 4 || height > x.dim(2) || width > x.dim(3))
    throw DimensionError("crop: invalid target for " + shape_str(x.shape()));
  if (height == x.dim(2) && width == x.dim(3)) return x;
  return slice(slice(x, 2, 0, height), 3, 0, width);
}

#define ROICODEC_INSTANTIATE(T)                                                              \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);             \
  template Tensor<T> gather(const Tensor<T>&, const Shape&, IndexMap);                       \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                     \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);         \
  template Tensor<T> pad_replicate(const Tensor<T>&, std::size_t, std::size_t);              \
  template Tensor<T> crop(const Tensor<T>&, std::size_t, std::size_t);

ROICODEC_INSTANTIATE(float)
ROICODEC_INSTANTIATE(double)

}  // namespace roicodec
