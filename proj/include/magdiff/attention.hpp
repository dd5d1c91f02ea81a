#pragma once

#include <optional>

#include "magdiff/layers.hpp"

namespace magdiff {

/// softmax(q kᵀ / sqrt(d_head)) v, heads split along the feature axis.
/// q: [B, Lq, d], k: [B, Lk, d], v: [B, Lk, dv]; d and dv divisible by heads.
template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads = 1);

/// Attention weights softmax(q kᵀ / sqrt(d)) for a single head: [B, Lq, Lk].
template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k);

/// Projections of one attention layer. Weights are [in, out] matrices.
template <typename T>
struct SelfAttentionParams {
  Tensor<T> wq, wk, wv;
  std::size_t heads = 1;
};

/// Q shared across both branches (APA); `wq2` is only present for FPA.
template <typename T>
struct CrossAttentionParams {
  Tensor<T> wq, wk1, wv1, wk2, wv2;
  std::optional<Tensor<T>> wq2;
  std::size_t heads = 1;
};

/// Learnable branch weights; each a one-element tensor.
template <typename T>
struct ApaWeights {
  Tensor<T> alpha1, alpha2;
};

/// x: [L, d_model] or [B, L, d_model] → same shape as the value projection.
template <typename T>
Tensor<T> self_attention(const Tensor<T>& x, const SelfAttentionParams<T>& p);

/// One cross-attention branch: softmax(x Wq (tok Wk)ᵀ / sqrt(d)) tok Wv.
template <typename T>
Tensor<T> cross_attention(const Tensor<T>& x, const Tensor<T>& tokens, const Tensor<T>& wq, const Tensor<T>& wk,
                          const Tensor<T>& wv, std::size_t heads);

/// Separate queries: softmax(Q1 K1ᵀ/√d) V1 + softmax(Q2 K2ᵀ/√d) V2 with
/// Q1 = x_text_q Wq and Q2 = x_img_q Wq2.
template <typename T>
Tensor<T> fpa_attention(const Tensor<T>& x_text_q, const Tensor<T>& x_img_q, const Tensor<T>& text_tokens,
                        const Tensor<T>& image_tokens, const CrossAttentionParams<T>& p);

/// Shared query: α1 softmax(Q K1ᵀ/√d) V1 + α2 softmax(Q K2ᵀ/√d) V2.
template <typename T>
Tensor<T> apa_attention(const Tensor<T>& x, const Tensor<T>& text_tokens, const Tensor<T>& image_tokens,
                        const CrossAttentionParams<T>& p, const ApaWeights<T>& apa);

}  // namespace magdiff
