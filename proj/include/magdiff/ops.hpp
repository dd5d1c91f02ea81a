#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "magdiff/tensor.hpp"

// Differentiable operations over Tensor<T>. All functions are explicitly
// instantiated for float and double.
namespace magdiff {

// Elementwise. Operands must have equal shapes, or one must hold a single
// element (scalar broadcast).
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);
template <typename T> Tensor<T> silu(const Tensor<T>& a);
/// Exact (erf) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& a);

/// x + b where b's shape equals the trailing dims of x (bias, positional tables).
template <typename T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& b);
/// x + b where b's shape equals the leading dims of x (per-sample, per-channel
/// offsets such as timestep embeddings on [N,C,H,W]).
template <typename T> Tensor<T> add_channel(const Tensor<T>& x, const Tensor<T>& b);

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);
template <typename T> Tensor<T> mse_loss(const Tensor<T>& pred, const Tensor<T>& target);

/// a[..., m, k] x b[..., k, n]. `b` may be rank 2 and is then shared across
/// a's batch dims; otherwise batch dims must match. Transpose flags apply to
/// the last two dims.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false,
                 bool transpose_b = false);

struct ConvOptions {
  std::vector<std::size_t> stride;   // empty → all ones
  std::vector<std::size_t> padding;  // empty → all zeros
};

/// Cross-correlation over 1, 2 or 3 spatial dims.
/// x: [N, Cin, *spatial], w: [Cout, Cin, *kernel], bias: [Cout] or empty.
template <typename T>
Tensor<T> conv(const Tensor<T>& x, const Tensor<T>& w, const std::optional<Tensor<T>>& bias,
               const ConvOptions& opts = {});

template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

/// x: [N, C, ...]; gamma, beta: [C].
template <typename T>
Tensor<T> group_norm(const Tensor<T>& x, std::size_t groups, const Tensor<T>& gamma,
                     const Tensor<T>& beta, T eps = T(1e-5));

// Layout. These copy.
template <typename T> Tensor<T> reshape(const Tensor<T>& x, const Shape& shape);
template <typename T> Tensor<T> permute(const Tensor<T>& x, const std::vector<std::size_t>& order);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis);
template <typename T> Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end);
/// Repeats each slice along axis 0 `times` times consecutively
/// ([B, ...] → [B*times, ...]).
template <typename T> Tensor<T> repeat_interleave(const Tensor<T>& x, std::size_t times);
/// Rows of `table` [V, d] selected by ids → [ids.size(), d].
template <typename T> Tensor<T> embedding(const Tensor<T>& table, const std::vector<std::size_t>& ids);

enum class ResampleMode { kArea, kNearest };

/// Separable 2-D resampling of x: [N, C, H, W] → [N, C, out_h, out_w].
/// kArea weights each output pixel by the exact overlap of its footprint
/// with input pixels; kNearest picks floor((i + 0.5) * in / out).
template <typename T>
Tensor<T> resample2d(const Tensor<T>& x, std::size_t out_h, std::size_t out_w, ResampleMode mode);

/// Clamp in forward; gradient passes where the input is inside [lo, hi].
template <typename T> Tensor<T> clamp(const Tensor<T>& x, T lo, T hi);

/// 1-D resampling weights [out, in] used by resample2d; exposed for tests.
std::vector<double> resample_weights(std::size_t in, std::size_t out, ResampleMode mode);

}  // namespace magdiff
