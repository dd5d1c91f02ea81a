#include <cmath>
#include <numbers>

#include "magdiff/ops.hpp"

namespace magdiff {

using detail::make_result;

namespace {

enum class Broadcast { kNone, kScalarA, kScalarB };

template <typename T>
Broadcast check_broadcast(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::kNone;
  if (b.numel() == 1) return Broadcast::kScalarB;
  if (a.numel() == 1) return Broadcast::kScalarA;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                   shape_str(b.shape()));
}

// Folds a full-size gradient into an operand that may have been broadcast.
template <typename T>
void accumulate(detail::Node<T>& target, const std::vector<T>& g, T factor, bool broadcast) {
  if (!target.requires_grad) return;
  auto& tg = target.grad_buffer();
  if (broadcast) {
    T s = 0;
    for (auto v : g) s += v;
    tg[0] += factor * s;
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) tg[i] += factor * g[i];
  }
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const auto bc = check_broadcast(a, b, "add");
  const auto& out_shape = bc == Broadcast::kScalarA ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  auto ad = a.data();
  auto bd = b.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = ad[bc == Broadcast::kScalarA ? 0 : i] + bd[bc == Broadcast::kScalarB ? 0 : i];
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(out_shape, std::move(out), "add", {an, bn}, [an, bn, bc](detail::Node<T>& self) {
    accumulate(*an, self.grad, T(1), bc == Broadcast::kScalarA);
    accumulate(*bn, self.grad, T(1), bc == Broadcast::kScalarB);
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  const auto bc = check_broadcast(a, b, "sub");
  const auto& out_shape = bc == Broadcast::kScalarA ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  auto ad = a.data();
  auto bd = b.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = ad[bc == Broadcast::kScalarA ? 0 : i] - bd[bc == Broadcast::kScalarB ? 0 : i];
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(out_shape, std::move(out), "sub", {an, bn}, [an, bn, bc](detail::Node<T>& self) {
    accumulate(*an, self.grad, T(1), bc == Broadcast::kScalarA);
    accumulate(*bn, self.grad, T(-1), bc == Broadcast::kScalarB);
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  const auto bc = check_broadcast(a, b, "mul");
  const auto& out_shape = bc == Broadcast::kScalarA ? b.shape() : a.shape();
  const std::size_t n = shape_numel(out_shape);
  auto ad = a.data();
  auto bd = b.data();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = ad[bc == Broadcast::kScalarA ? 0 : i] * bd[bc == Broadcast::kScalarB ? 0 : i];
  }
  auto an = a.node();
  auto bn = b.node();
  return make_result<T>(out_shape, std::move(out), "mul", {an, bn}, [an, bn, bc](detail::Node<T>& self) {
    const std::size_t n = self.grad.size();
    const bool sa = bc == Broadcast::kScalarA;
    const bool sb = bc == Broadcast::kScalarB;
    if (an->requires_grad) {
      std::vector<T> g(n);
      for (std::size_t i = 0; i < n; ++i) g[i] = self.grad[i] * bn->data[sb ? 0 : i];
      accumulate(*an, g, T(1), sa);
    }
    if (bn->requires_grad) {
      std::vector<T> g(n);
      for (std::size_t i = 0; i < n; ++i) g[i] = self.grad[i] * an->data[sa ? 0 : i];
      accumulate(*bn, g, T(1), sb);
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= s;
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), "scale", {an}, [an, s](detail::Node<T>& self) {
    accumulate(*an, self.grad, s, false);
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += s;
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), "add_scalar", {an}, [an](detail::Node<T>& self) {
    accumulate(*an, self.grad, T(1), false);
  });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
  auto ad = a.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * sigmoid(ad[i]);
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), "silu", {an}, [an](detail::Node<T>& self) {
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = an->data[i];
      const T s = sigmoid(x);
      g[i] += self.grad[i] * s * (T(1) + x * (T(1) - s));
    }
  });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  auto ad = a.data();
  std::vector<T> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) {
    out[i] = T(0.5) * ad[i] * (T(1) + std::erf(ad[i] * inv_sqrt2));
  }
  auto an = a.node();
  return make_result<T>(a.shape(), std::move(out), "gelu", {an}, [an, inv_sqrt2](detail::Node<T>& self) {
    const T inv_sqrt_2pi = inv_sqrt2 * std::numbers::inv_sqrtpi_v<T>;
    auto& g = an->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T x = an->data[i];
      const T cdf = T(0.5) * (T(1) + std::erf(x * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * x * x);
      g[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b) {
  const auto& xs = x.shape();
  const auto& bs = b.shape();
  if (bs.size() > xs.size() || !std::equal(bs.rbegin(), bs.rend(), xs.rbegin())) {
    throw ShapeError("add_bias: bias shape " + shape_str(bs) + " is not a suffix of " + shape_str(xs));
  }
  const std::size_t inner = b.numel();
  auto xd = x.data();
  auto bd = b.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] + bd[i % inner];
  auto xn = x.node();
  auto bn = b.node();
  return make_result<T>(xs, std::move(out), "add_bias", {xn, bn}, [xn, bn, inner](detail::Node<T>& self) {
    accumulate(*xn, self.grad, T(1), false);
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % inner] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& b) {
  const auto& xs = x.shape();
  const auto& bs = b.shape();
  if (bs.size() > xs.size() || !std::equal(bs.begin(), bs.end(), xs.begin())) {
    throw ShapeError("add_channel: shape " + shape_str(bs) + " is not a prefix of " + shape_str(xs));
  }
  const std::size_t inner = x.numel() / b.numel();
  auto xd = x.data();
  auto bd = b.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xd[i] + bd[i / inner];
  auto xn = x.node();
  auto bn = b.node();
  return make_result<T>(xs, std::move(out), "add_channel", {xn, bn}, [xn, bn, inner](detail::Node<T>& self) {
    accumulate(*xn, self.grad, T(1), false);
    if (bn->requires_grad) {
      auto& g = bn->grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i / inner] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T s = 0;
  for (auto v : a.data()) s += v;
  auto an = a.node();
  return make_result<T>(Shape{}, {s}, "sum", {an}, [an](detail::Node<T>& self) {
    auto& g = an->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_loss: shape mismatch " + shape_str(pred.shape()) + " vs " +
                     shape_str(target.shape()));
  }
  auto pd = pred.data();
  auto td = target.data();
  T s = 0;
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const T d = pd[i] - td[i];
    s += d * d;
  }
  const T inv_n = T(1) / static_cast<T>(pd.size());
  auto pn = pred.node();
  auto tn = target.node();
  return make_result<T>(Shape{}, {s * inv_n}, "mse_loss", {pn, tn}, [pn, tn, inv_n](detail::Node<T>& self) {
    const T g0 = T(2) * inv_n * self.grad[0];
    if (pn->requires_grad) {
      auto& g = pn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += g0 * (pn->data[i] - tn->data[i]);
    }
    if (tn->requires_grad) {
      auto& g = tn->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= g0 * (pn->data[i] - tn->data[i]);
    }
  });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  auto xd = x.data();
  std::vector<T> out(xd.size());
  for (std::size_t i = 0; i < xd.size(); ++i) out[i] = std::min(hi, std::max(lo, xd[i]));
  auto xn = x.node();
  return make_result<T>(x.shape(), std::move(out), "clamp", {xn}, [xn, lo, hi](detail::Node<T>& self) {
    auto& g = xn->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xn->data[i] >= lo && xn->data[i] <= hi) g[i] += self.grad[i];
    }
  });
}

#define MAGDIFF_INSTANTIATE(T)                                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                \
  template Tensor<T> scale(const Tensor<T>&, T);                             \
  template Tensor<T> add_scalar(const Tensor<T>&, T);                        \
  template Tensor<T> silu(const Tensor<T>&);                                 \
  template Tensor<T> gelu(const Tensor<T>&);                                 \
  template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> add_channel(const Tensor<T>&, const Tensor<T>&);        \
  template Tensor<T> sum(const Tensor<T>&);                                  \
  template Tensor<T> mean(const Tensor<T>&);                                 \
  template Tensor<T> mse_loss(const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> clamp(const Tensor<T>&, T, T);

MAGDIFF_INSTANTIATE(float)
MAGDIFF_INSTANTIATE(double)

}  // namespace magdiff
