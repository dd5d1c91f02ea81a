#include <algorithm>
#include <cmath>
#include <limits>

#include "gemm.hpp"
#include "magdiff/ops.hpp"

namespace magdiff {

using detail::gemm;
using detail::make_result;

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a, bool transpose_b) {
  if (a.rank() < 2 || b.rank() < 2) {
    throw ShapeError("matmul: operands need rank >= 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  }
  const auto& as = a.shape();
  const auto& bs = b.shape();
  const std::size_t ar = as.size();
  const std::size_t br = bs.size();
  const std::size_t m = transpose_a ? as[ar - 1] : as[ar - 2];
  const std::size_t k = transpose_a ? as[ar - 2] : as[ar - 1];
  const std::size_t kb = transpose_b ? bs[br - 1] : bs[br - 2];
  const std::size_t n = transpose_b ? bs[br - 2] : bs[br - 1];
  if (k != kb) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_str(as) + " x " + shape_str(bs));
  }
  const bool shared_b = br == 2;
  if (!shared_b && (br != ar || !std::equal(as.begin(), as.end() - 2, bs.begin()))) {
    throw ShapeError("matmul: batch dimension mismatch " + shape_str(as) + " x " + shape_str(bs));
  }
  const std::size_t batch = a.numel() / (m * k);
  Shape out_shape(as.begin(), as.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);

  std::vector<T> out(batch * m * n);
  const T* ad = a.data().data();
  const T* bd = b.data().data();
  if (shared_b && !transpose_a) {
    // Fold the batch into the row dimension.
    gemm(false, transpose_b, batch * m, n, k, ad, bd, out.data(), false);
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      gemm(transpose_a, transpose_b, m, n, k, ad + i * m * k, bd + (shared_b ? 0 : i * k * n),
           out.data() + i * m * n, false);
    }
  }

  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(std::move(out_shape), std::move(out), "matmul", {an, bn},
                        [an, bn, transpose_a, transpose_b, shared_b, batch, m, n, k](detail::Node<T>& self) {
    const T* g = self.grad.data();
    const T* ad = an->data.data();
    const T* bd = bn->data.data();
    if (an->requires_grad) {
      T* ga = an->grad_buffer().data();
      for (std::size_t i = 0; i < batch; ++i) {
        const T* bi = bd + (shared_b ? 0 : i * k * n);
        const T* gi = g + i * m * n;
        // C = op(A)op(B):  d op(A) = G op(B)^T
        if (!transpose_a) {
          gemm(false, !transpose_b, m, k, n, gi, bi, ga + i * m * k, true);
        } else {
          // A stored [k,m]: dA = op(B) G^T
          gemm(transpose_b, true, k, m, n, bi, gi, ga + i * m * k, true);
        }
      }
    }
    if (bn->requires_grad) {
      T* gb = bn->grad_buffer().data();
      for (std::size_t i = 0; i < batch; ++i) {
        const T* ai = ad + i * m * k;
        const T* gi = g + i * m * n;
        T* gbi = gb + (shared_b ? 0 : i * k * n);
        // d op(B) = op(A)^T G
        if (!transpose_b) {
          gemm(!transpose_a, false, k, n, m, ai, gi, gbi, true);
        } else {
          // B stored [n,k]: dB = G^T op(A)
          gemm(true, transpose_a, n, k, m, gi, ai, gbi, true);
        }
      }
    }
  });
}

namespace {

// Convolution geometry normalized to three spatial dims (missing dims are 1).
struct ConvGeom {
  std::size_t n, cin, cout;
  std::array<std::size_t, 3> in, k, stride, pad, out;
  std::size_t in_size() const { return in[0] * in[1] * in[2]; }
  std::size_t out_size() const { return out[0] * out[1] * out[2]; }
  std::size_t kernel_size() const { return k[0] * k[1] * k[2]; }
  std::size_t cols_rows() const { return cin * kernel_size(); }
};

template <typename T>
ConvGeom conv_geometry(const Tensor<T>& x, const Tensor<T>& w, const ConvOptions& opts) {
  const std::size_t r = x.rank();
  if (r < 3 || r > 5) throw ShapeError("conv: input must be [N,C,*spatial] with 1-3 spatial dims, got " + shape_str(x.shape()));
  if (w.rank() != r) throw ShapeError("conv: weight " + shape_str(w.shape()) + " does not match input " + shape_str(x.shape()));
  const std::size_t sdims = r - 2;
  if (w.dim(1) != x.dim(1)) {
    throw ShapeError("conv: channel mismatch, input " + shape_str(x.shape()) + " weight " + shape_str(w.shape()));
  }
  if ((!opts.stride.empty() && opts.stride.size() != sdims) || (!opts.padding.empty() && opts.padding.size() != sdims)) {
    throw ShapeError("conv: stride/padding rank must equal the number of spatial dims");
  }
  ConvGeom g{};
  g.n = x.dim(0);
  g.cin = x.dim(1);
  g.cout = w.dim(0);
  const std::size_t off = 3 - sdims;
  for (std::size_t d = 0; d < 3; ++d) {
    g.in[d] = 1;
    g.k[d] = 1;
    g.stride[d] = 1;
    g.pad[d] = 0;
  }
  for (std::size_t d = 0; d < sdims; ++d) {
    g.in[off + d] = x.dim(2 + d);
    g.k[off + d] = w.dim(2 + d);
    g.stride[off + d] = opts.stride.empty() ? 1 : opts.stride[d];
    g.pad[off + d] = opts.padding.empty() ? 0 : opts.padding[d];
    if (g.stride[off + d] == 0) throw ShapeError("conv: stride must be positive");
  }
  for (std::size_t d = 0; d < 3; ++d) {
    const std::size_t padded = g.in[d] + 2 * g.pad[d];
    if (padded < g.k[d]) {
      throw ShapeError("conv: padded input " + shape_str(x.shape()) + " smaller than kernel " + shape_str(w.shape()));
    }
    g.out[d] = (padded - g.k[d]) / g.stride[d] + 1;
  }
  return g;
}

// Output positions [lo, hi) along one axis whose input index o*stride + k - pad
// is inside [0, in).
struct ValidRange {
  std::size_t lo = 0, hi = 0;
};

ValidRange valid_range(std::size_t in, std::size_t out, std::size_t stride, std::size_t k, std::size_t pad) {
  ValidRange r;
  r.lo = pad > k ? (pad - k + stride - 1) / stride : 0;
  r.hi = in + pad > k ? std::min(out, (in + pad - k + stride - 1) / stride) : 0;
  if (r.lo > r.hi) r.lo = r.hi;
  return r;
}

// cols[(c,kd,kh,kw), n*P + p] for the whole batch.
template <typename T>
void im2col(const ConvGeom& g, const T* x, T* cols) {
  const std::size_t P = g.out_size();
  const std::size_t NP = g.n * P;
  const std::size_t ow_n = g.out[2];
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t a = 0; a < g.k[0]; ++a) {
      const ValidRange rd = valid_range(g.in[0], g.out[0], g.stride[0], a, g.pad[0]);
      for (std::size_t b = 0; b < g.k[1]; ++b) {
        const ValidRange rh = valid_range(g.in[1], g.out[1], g.stride[1], b, g.pad[1]);
        for (std::size_t e = 0; e < g.k[2]; ++e) {
          const ValidRange rw = valid_range(g.in[2], g.out[2], g.stride[2], e, g.pad[2]);
          const std::size_t row = ((c * g.k[0] + a) * g.k[1] + b) * g.k[2] + e;
          T* dst = cols + row * NP;
          for (std::size_t n = 0; n < g.n; ++n) {
            const T* src = x + (n * g.cin + c) * g.in_size();
            T* d = dst + n * P;
            for (std::size_t od = 0; od < g.out[0]; ++od) {
              for (std::size_t oh = 0; oh < g.out[1]; ++oh, d += ow_n) {
                if (od < rd.lo || od >= rd.hi || oh < rh.lo || oh >= rh.hi) {
                  std::fill_n(d, ow_n, T(0));
                  continue;
                }
                const std::size_t id = od * g.stride[0] + a - g.pad[0];
                const std::size_t ih = oh * g.stride[1] + b - g.pad[1];
                const T* s = src + (id * g.in[1] + ih) * g.in[2] + (rw.lo * g.stride[2] + e - g.pad[2]);
                std::fill_n(d, rw.lo, T(0));
                if (g.stride[2] == 1) {
                  std::copy_n(s, rw.hi - rw.lo, d + rw.lo);
                } else {
                  for (std::size_t ow = rw.lo; ow < rw.hi; ++ow, s += g.stride[2]) d[ow] = *s;
                }
                std::fill_n(d + rw.hi, ow_n - rw.hi, T(0));
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeom& g, const T* cols, T* dx) {
  const std::size_t P = g.out_size();
  const std::size_t NP = g.n * P;
  const std::size_t ow_n = g.out[2];
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t a = 0; a < g.k[0]; ++a) {
      const ValidRange rd = valid_range(g.in[0], g.out[0], g.stride[0], a, g.pad[0]);
      for (std::size_t b = 0; b < g.k[1]; ++b) {
        const ValidRange rh = valid_range(g.in[1], g.out[1], g.stride[1], b, g.pad[1]);
        for (std::size_t e = 0; e < g.k[2]; ++e) {
          const ValidRange rw = valid_range(g.in[2], g.out[2], g.stride[2], e, g.pad[2]);
          const std::size_t row = ((c * g.k[0] + a) * g.k[1] + b) * g.k[2] + e;
          const T* src = cols + row * NP;
          for (std::size_t n = 0; n < g.n; ++n) {
            T* dst = dx + (n * g.cin + c) * g.in_size();
            const T* sp = src + n * P;
            for (std::size_t od = rd.lo; od < rd.hi; ++od) {
              const std::size_t id = od * g.stride[0] + a - g.pad[0];
              for (std::size_t oh = rh.lo; oh < rh.hi; ++oh) {
                const std::size_t ih = oh * g.stride[1] + b - g.pad[1];
                const T* s = sp + (od * g.out[1] + oh) * ow_n;
                T* d = dst + (id * g.in[1] + ih) * g.in[2] + (rw.lo * g.stride[2] + e - g.pad[2]);
                for (std::size_t ow = rw.lo; ow < rw.hi; ++ow, d += g.stride[2]) *d += s[ow];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv(const Tensor<T>& x, const Tensor<T>& w, const std::optional<Tensor<T>>& bias,
               const ConvOptions& opts) {
  const ConvGeom g = conv_geometry(x, w, opts);
  if (bias && (bias->rank() != 1 || bias->dim(0) != g.cout)) {
    throw ShapeError("conv: bias " + shape_str(bias->shape()) + " does not match weight " + shape_str(w.shape()));
  }
  const std::size_t P = g.out_size();
  const std::size_t NP = g.n * P;
  const std::size_t K = g.cols_rows();

  std::vector<T> cols(K * NP);
  im2col(g, x.data().data(), cols.data());
  std::vector<T> tmp(g.cout * NP);
  gemm(false, false, g.cout, NP, K, w.data().data(), cols.data(), tmp.data(), false);

  Shape out_shape{g.n, g.cout};
  for (std::size_t d = 2; d < x.rank(); ++d) out_shape.push_back(g.out[3 - (x.rank() - d)]);
  std::vector<T> out(g.n * g.cout * P);
  for (std::size_t co = 0; co < g.cout; ++co) {
    const T b = bias ? bias->data()[co] : T(0);
    for (std::size_t n = 0; n < g.n; ++n) {
      const T* src = tmp.data() + co * NP + n * P;
      T* dst = out.data() + (n * g.cout + co) * P;
      for (std::size_t p = 0; p < P; ++p) dst[p] = src[p] + b;
    }
  }

  auto xn = x.node();
  auto wn = w.node();
  std::vector<std::shared_ptr<detail::Node<T>>> inputs{xn, wn};
  std::shared_ptr<detail::Node<T>> bn = bias ? bias->node() : nullptr;
  if (bn) inputs.push_back(bn);
  return make_result<T>(std::move(out_shape), std::move(out), "conv", std::move(inputs),
                        [xn, wn, bn, g, cols = std::move(cols)](detail::Node<T>& self) {
    const std::size_t P = g.out_size();
    const std::size_t NP = g.n * P;
    const std::size_t K = g.cols_rows();
    std::vector<T> gt(g.cout * NP);
    for (std::size_t co = 0; co < g.cout; ++co) {
      for (std::size_t n = 0; n < g.n; ++n) {
        std::copy_n(self.grad.data() + (n * g.cout + co) * P, P, gt.data() + co * NP + n * P);
      }
    }
    if (bn && bn->requires_grad) {
      auto& gb = bn->grad_buffer();
      for (std::size_t co = 0; co < g.cout; ++co) {
        T s = 0;
        for (std::size_t i = 0; i < NP; ++i) s += gt[co * NP + i];
        gb[co] += s;
      }
    }
    if (wn->requires_grad) {
      gemm(false, true, g.cout, K, NP, gt.data(), cols.data(), wn->grad_buffer().data(), true);
    }
    if (xn->requires_grad) {
      std::vector<T> dcols(K * NP);
      gemm(true, false, K, NP, g.cout, wn->data.data(), gt.data(), dcols.data(), false);
      col2im(g, dcols.data(), xn->grad_buffer().data());
    }
  });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_str(x.shape()));
  }
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < len; ++j) mx = std::max(mx, xd[base + j * inner]);
      T total = 0;
      for (std::size_t j = 0; j < len; ++j) {
        const T e = std::exp(xd[base + j * inner] - mx);
        out[base + j * inner] = e;
        total += e;
      }
      const T inv = T(1) / total;
      for (std::size_t j = 0; j < len; ++j) out[base + j * inner] *= inv;
    }
  }
  auto xn = x.node();
  return make_result<T>(s, std::move(out), "softmax", {xn}, [xn, outer, inner, len](detail::Node<T>& self) {
    auto& gx = xn->grad_buffer();
    const auto& y = self.data;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t in = 0; in < inner; ++in) {
        const std::size_t base = o * len * inner + in;
        T dot = 0;
        for (std::size_t j = 0; j < len; ++j) dot += self.grad[base + j * inner] * y[base + j * inner];
        for (std::size_t j = 0; j < len; ++j) {
          const std::size_t idx = base + j * inner;
          gx[idx] += y[idx] * (self.grad[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, std::size_t groups, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  if (x.rank() < 2) throw ShapeError("group_norm: input must be [N,C,...], got " + shape_str(x.shape()));
  const std::size_t n = x.dim(0);
  const std::size_t c = x.dim(1);
  if (groups == 0 || c % groups != 0) {
    throw ShapeError("group_norm: " + std::to_string(c) + " channels not divisible into " + std::to_string(groups) + " groups");
  }
  if (gamma.numel() != c || beta.numel() != c) {
    throw ShapeError("group_norm: gamma/beta must have " + std::to_string(c) + " elements");
  }
  const std::size_t spatial = x.numel() / (n * c);
  const std::size_t cpg = c / groups;
  const std::size_t m = cpg * spatial;
  auto xd = x.data();
  auto gd = gamma.data();
  auto bd = beta.data();
  std::vector<T> out(xd.size());
  std::vector<T> xhat(xd.size());
  std::vector<T> inv_std(n * groups);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t gi = 0; gi < groups; ++gi) {
      const std::size_t base = (i * c + gi * cpg) * spatial;
      T mu = 0;
      for (std::size_t j = 0; j < m; ++j) mu += xd[base + j];
      mu /= static_cast<T>(m);
      T var = 0;
      for (std::size_t j = 0; j < m; ++j) {
        const T d = xd[base + j] - mu;
        var += d * d;
      }
      var /= static_cast<T>(m);
      const T is = T(1) / std::sqrt(var + eps);
      inv_std[i * groups + gi] = is;
      for (std::size_t j = 0; j < m; ++j) {
        const std::size_t ch = gi * cpg + j / spatial;
        const T h = (xd[base + j] - mu) * is;
        xhat[base + j] = h;
        out[base + j] = h * gd[ch] + bd[ch];
      }
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_result<T>(x.shape(), std::move(out), "group_norm", {xn, gn, bn},
                        [xn, gn, bn, n, c, groups, spatial, cpg, m, xhat = std::move(xhat),
                         inv_std = std::move(inv_std)](detail::Node<T>& self) {
    const auto& gy = self.grad;
    if (gn->requires_grad || bn->requires_grad) {
      std::vector<T> dg(c, T(0)), db(c, T(0));
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t base = (i * c + ch) * spatial;
          for (std::size_t s = 0; s < spatial; ++s) {
            dg[ch] += gy[base + s] * xhat[base + s];
            db[ch] += gy[base + s];
          }
        }
      }
      if (gn->requires_grad) {
        auto& g = gn->grad_buffer();
        for (std::size_t ch = 0; ch < c; ++ch) g[ch] += dg[ch];
      }
      if (bn->requires_grad) {
        auto& g = bn->grad_buffer();
        for (std::size_t ch = 0; ch < c; ++ch) g[ch] += db[ch];
      }
    }
    if (xn->requires_grad) {
      auto& gx = xn->grad_buffer();
      const T inv_m = T(1) / static_cast<T>(m);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t gi = 0; gi < groups; ++gi) {
          const std::size_t base = (i * c + gi * cpg) * spatial;
          T mean_d = 0, mean_dx = 0;
          for (std::size_t j = 0; j < m; ++j) {
            const T d = gy[base + j] * gn->data[gi * cpg + j / spatial];
            mean_d += d;
            mean_dx += d * xhat[base + j];
          }
          mean_d *= inv_m;
          mean_dx *= inv_m;
          const T is = inv_std[i * groups + gi];
          for (std::size_t j = 0; j < m; ++j) {
            const T d = gy[base + j] * gn->data[gi * cpg + j / spatial];
            gx[base + j] += is * (d - mean_d - xhat[base + j] * mean_dx);
          }
        }
      }
    }
  });
}

#define MAGDIFF_INSTANTIATE(T)                                                                      \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&, bool, bool);                        \
  template Tensor<T> conv(const Tensor<T>&, const Tensor<T>&, const std::optional<Tensor<T>>&,      \
                          const ConvOptions&);                                                      \
  template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                        \
  template Tensor<T> group_norm(const Tensor<T>&, std::size_t, const Tensor<T>&, const Tensor<T>&, T);

MAGDIFF_INSTANTIATE(float)
MAGDIFF_INSTANTIATE(double)

}  // namespace magdiff
