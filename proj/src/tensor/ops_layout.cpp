#include <algorithm>
#include <cmath>
#include <numeric>

#include "gemm.hpp"
#include "magdiff/ops.hpp"

namespace magdiff {

using detail::make_result;

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, const Shape& shape) {
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  auto xn = x.node();
  return make_result<T>(shape, std::move(out), "reshape", {xn}, [xn](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

namespace {

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// For each output flat index, the input flat index under the permutation.
std::vector<std::size_t> permute_index(const Shape& in_shape, const std::vector<std::size_t>& order) {
  const std::size_t r = in_shape.size();
  const auto in_st = strides_of(in_shape);
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in_shape[order[i]];
  const std::size_t n = shape_numel(in_shape);
  std::vector<std::size_t> idx(n);
  std::vector<std::size_t> coord(r, 0);
  for (std::size_t o = 0; o < n; ++o) {
    std::size_t src = 0;
    for (std::size_t i = 0; i < r; ++i) src += coord[i] * in_st[order[i]];
    idx[o] = src;
    for (std::size_t i = r; i-- > 0;) {
      if (++coord[i] < out_shape[i]) break;
      coord[i] = 0;
    }
  }
  return idx;
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order) {
  const std::size_t r = x.rank();
  std::vector<std::size_t> check(order);
  std::sort(check.begin(), check.end());
  std::vector<std::size_t> ident(r);
  std::iota(ident.begin(), ident.end(), 0);
  if (check != ident) throw ShapeError("permute: invalid axis order for shape " + shape_str(x.shape()));
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = x.dim(order[i]);
  auto idx = permute_index(x.shape(), order);
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t o = 0; o < out.size(); ++o) out[o] = xd[idx[o]];
  auto xn = x.node();
  return make_result<T>(std::move(out_shape), std::move(out), "permute", {xn},
                        [xn, idx = std::move(idx)](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t o = 0; o < idx.size(); ++o) g[idx[o]] += self.grad[o];
  });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + shape_str(s0));
  std::size_t total = 0;
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = i == axis || s[i] == s0[i];
    if (!ok) throw ShapeError("concat: incompatible shapes " + shape_str(s0) + " and " + shape_str(s));
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape out_shape = s0;
  out_shape[axis] = total;
  std::vector<T> out(shape_numel(out_shape));
  std::vector<std::shared_ptr<detail::Node<T>>> nodes;
  std::vector<std::size_t> widths;
  std::size_t offset = 0;
  for (const auto& x : xs) {
    const std::size_t w = x.dim(axis) * inner;
    auto xd = x.data();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(xd.data() + o * w, w, out.data() + o * total * inner + offset);
    }
    offset += w;
    nodes.push_back(x.node());
    widths.push_back(w);
  }
  auto inputs = nodes;
  return make_result<T>(std::move(out_shape), std::move(out), "concat", std::move(inputs),
                        [nodes, widths, outer, total, inner](detail::Node<T>& self) {
    std::size_t offset = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      const std::size_t w = widths[k];
      if (nodes[k]->requires_grad) {
        auto& g = nodes[k]->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
          const T* src = self.grad.data() + o * total * inner + offset;
          for (std::size_t i = 0; i < w; ++i) g[o * w + i] += src[i];
        }
      }
      offset += w;
    }
  });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin >= end || end > x.dim(axis)) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid on axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const std::size_t w = (end - begin) * inner;
  Shape out_shape = s;
  out_shape[axis] = end - begin;
  std::vector<T> out(outer * w);
  auto xd = x.data();
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(xd.data() + (o * len + begin) * inner, w, out.data() + o * w);
  }
  auto xn = x.node();
  return make_result<T>(std::move(out_shape), std::move(out), "slice", {xn},
                        [xn, outer, len, begin, inner, w](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t i = 0; i < w; ++i) g[(o * len + begin) * inner + i] += self.grad[o * w + i];
    }
  });
}

template <typename T>
Tensor<T> repeat_interleave(const Tensor<T>& x, std::size_t times) {
  if (x.rank() == 0 || times == 0) throw ShapeError("repeat_interleave: needs rank >= 1 and times >= 1");
  const std::size_t rows = x.dim(0);
  const std::size_t inner = x.numel() / rows;
  Shape out_shape = x.shape();
  out_shape[0] = rows * times;
  std::vector<T> out(x.numel() * times);
  auto xd = x.data();
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t t = 0; t < times; ++t) {
      std::copy_n(xd.data() + r * inner, inner, out.data() + (r * times + t) * inner);
    }
  }
  auto xn = x.node();
  return make_result<T>(std::move(out_shape), std::move(out), "repeat_interleave", {xn},
                        [xn, rows, times, inner](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t t = 0; t < times; ++t) {
        const T* src = self.grad.data() + (r * times + t) * inner;
        for (std::size_t i = 0; i < inner; ++i) g[r * inner + i] += src[i];
      }
    }
  });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be [V,d], got " + shape_str(table.shape()));
  if (ids.empty()) throw ShapeError("embedding: no ids");
  const std::size_t v = table.dim(0);
  const std::size_t d = table.dim(1);
  std::vector<T> out(ids.size() * d);
  auto td = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) throw ShapeError("embedding: id " + std::to_string(ids[i]) + " out of range " + std::to_string(v));
    std::copy_n(td.data() + ids[i] * d, d, out.data() + i * d);
  }
  auto tn = table.node();
  return make_result<T>(Shape{ids.size(), d}, std::move(out), "embedding", {tn},
                        [tn, ids, d](detail::Node<T>& self) {
    auto& g = tn->grad_buffer();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      for (std::size_t j = 0; j < d; ++j) g[ids[i] * d + j] += self.grad[i * d + j];
    }
  });
}

std::vector<double> resample_weights(std::size_t in, std::size_t out, ResampleMode mode) {
  if (in == 0 || out == 0) throw ShapeError("resample: sizes must be positive");
  std::vector<double> w(out * in, 0.0);
  if (mode == ResampleMode::kNearest) {
    for (std::size_t o = 0; o < out; ++o) {
      auto src = static_cast<std::size_t>(std::floor((static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out)));
      w[o * in + std::min(src, in - 1)] = 1.0;
    }
    return w;
  }
  // Output pixel o covers [o*in/out, (o+1)*in/out) in input coordinates.
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    const double lo = static_cast<double>(o) * ratio;
    const double hi = static_cast<double>(o + 1) * ratio;
    for (auto i = static_cast<std::size_t>(std::floor(lo)); i < in && static_cast<double>(i) < hi; ++i) {
      const double overlap = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
      if (overlap > 0) w[o * in + i] = overlap / ratio;
    }
  }
  return w;
}

template <typename T>
Tensor<T> resample2d(const Tensor<T>& x, std::size_t out_h, std::size_t out_w, ResampleMode mode) {
  if (x.rank() != 4) throw ShapeError("resample2d: input must be [N,C,H,W], got " + shape_str(x.shape()));
  const std::size_t planes = x.dim(0) * x.dim(1);
  const std::size_t h = x.dim(2);
  const std::size_t w = x.dim(3);
  std::vector<T> rh, rw;
  for (double v : resample_weights(h, out_h, mode)) rh.push_back(static_cast<T>(v));
  for (double v : resample_weights(w, out_w, mode)) rw.push_back(static_cast<T>(v));
  // Y_p = Rh · X_p · Rw^T per plane.
  std::vector<T> out(planes * out_h * out_w);
  std::vector<T> tmp(out_h * w);
  auto xd = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    detail::gemm(false, false, out_h, w, h, rh.data(), xd.data() + p * h * w, tmp.data(), false);
    detail::gemm(false, true, out_h, out_w, w, tmp.data(), rw.data(), out.data() + p * out_h * out_w, false);
  }
  auto xn = x.node();
  return make_result<T>(Shape{x.dim(0), x.dim(1), out_h, out_w}, std::move(out), "resample2d", {xn},
                        [xn, planes, h, w, out_h, out_w, rh = std::move(rh), rw = std::move(rw)](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    std::vector<T> tmp(out_h * w);
    for (std::size_t p = 0; p < planes; ++p) {
      // dX = Rh^T · dY · Rw
      detail::gemm(false, false, out_h, w, out_w, self.grad.data() + p * out_h * out_w, rw.data(), tmp.data(), false);
      detail::gemm(true, false, h, w, out_h, rh.data(), tmp.data(), g.data() + p * h * w, true);
    }
  });
}

#define MAGDIFF_INSTANTIATE(T)                                                                   \
  template Tensor<T> reshape(const Tensor<T>&, const Shape&);                                    \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<std::size_t>&);                 \
  template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                         \
  template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);             \
  template Tensor<T> repeat_interleave(const Tensor<T>&, std::size_t);                           \
  template Tensor<T> embedding(const Tensor<T>&, const std::vector<std::size_t>&);               \
  template Tensor<T> resample2d(const Tensor<T>&, std::size_t, std::size_t, ResampleMode);

MAGDIFF_INSTANTIATE(float)
MAGDIFF_INSTANTIATE(double)

}  // namespace magdiff
