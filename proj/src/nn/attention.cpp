#include "magdiff/attention.hpp"

#include <cmath>

namespace magdiff {

namespace {

template <typename T>
Tensor<T> as_batched(const Tensor<T>& x) {
  if (x.rank() == 3) return x;
  if (x.rank() == 2) return reshape(x, {1, x.dim(0), x.dim(1)});
  throw ShapeError("attention expects [L,d] or [B,L,d], got " + shape_str(x.shape()));
}

template <typename T>
Tensor<T> restore_rank(const Tensor<T>& y, std::size_t rank) {
  return rank == 2 ? reshape(y, {y.dim(1), y.dim(2)}) : y;
}

// [B, L, H*dh] → [B*H, L, dh]
template <typename T>
Tensor<T> split_heads(const Tensor<T>& x, std::size_t heads) {
  if (heads == 1) return x;
  const std::size_t b = x.dim(0), l = x.dim(1), d = x.dim(2);
  auto y = permute(reshape(x, {b, l, heads, d / heads}), {0, 2, 1, 3});
  return reshape(y, {b * heads, l, d / heads});
}

template <typename T>
Tensor<T> merge_heads(const Tensor<T>& x, std::size_t heads) {
  if (heads == 1) return x;
  const std::size_t bh = x.dim(0), l = x.dim(1), dh = x.dim(2);
  auto y = permute(reshape(x, {bh / heads, heads, l, dh}), {0, 2, 1, 3});
  return reshape(y, {bh / heads, l, heads * dh});
}

template <typename T>
void require_tokens(const Tensor<T>& tokens, const char* what) {
  if (tokens.rank() < 2 || tokens.dim(tokens.rank() - 2) == 0) {
    throw ShapeError(std::string(what) + " token set is empty");
  }
}

}  // namespace

template <typename T>
Tensor<T> attention_weights(const Tensor<T>& q, const Tensor<T>& k) {
  const T inv = T(1) / std::sqrt(static_cast<T>(q.dim(q.rank() - 1)));
  return softmax(scale(matmul(q, k, false, true), inv), q.rank() - 1);
}

template <typename T>
Tensor<T> scaled_dot_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v, std::size_t heads) {
  if (q.rank() != 3 || k.rank() != 3 || v.rank() != 3) throw ShapeError("scaled_dot_attention expects rank-3 inputs");
  if (q.dim(0) != k.dim(0) || k.dim(0) != v.dim(0) || k.dim(1) != v.dim(1) || q.dim(2) != k.dim(2)) {
    throw ShapeError("attention shape mismatch: q " + shape_str(q.shape()) + ", k " + shape_str(k.shape()) + ", v " +
                     shape_str(v.shape()));
  }
  if (heads == 0 || q.dim(2) % heads != 0 || v.dim(2) % heads != 0) {
    throw ShapeError("feature width not divisible by " + std::to_string(heads) + " heads");
  }
  auto w = attention_weights(split_heads(q, heads), split_heads(k, heads));
  return merge_heads(matmul(w, split_heads(v, heads)), heads);
}

template <typename T>
Tensor<T> self_attention(const Tensor<T>& x, const SelfAttentionParams<T>& p) {
  auto xb = as_batched(x);
  auto y = scaled_dot_attention(matmul(xb, p.wq), matmul(xb, p.wk), matmul(xb, p.wv), p.heads);
  return restore_rank(y, x.rank());
}

template <typename T>
Tensor<T> cross_attention(const Tensor<T>& x, const Tensor<T>& tokens, const Tensor<T>& wq, const Tensor<T>& wk,
                          const Tensor<T>& wv, std::size_t heads) {
  require_tokens(tokens, "cross-attention");
  auto xb = as_batched(x), tb = as_batched(tokens);
  auto y = scaled_dot_attention(matmul(xb, wq), matmul(tb, wk), matmul(tb, wv), heads);
  return restore_rank(y, x.rank());
}

template <typename T>
Tensor<T> fpa_attention(const Tensor<T>& x_text_q, const Tensor<T>& x_img_q, const Tensor<T>& text_tokens,
                        const Tensor<T>& image_tokens, const CrossAttentionParams<T>& p) {
  if (!p.wq2) throw ValueError("fpa_attention needs a second query projection");
  require_tokens(text_tokens, "text");
  require_tokens(image_tokens, "image");
  auto a = cross_attention(x_text_q, text_tokens, p.wq, p.wk1, p.wv1, p.heads);
  auto b = cross_attention(x_img_q, image_tokens, *p.wq2, p.wk2, p.wv2, p.heads);
  return add(a, b);
}

template <typename T>
Tensor<T> apa_attention(const Tensor<T>& x, const Tensor<T>& text_tokens, const Tensor<T>& image_tokens,
                        const CrossAttentionParams<T>& p, const ApaWeights<T>& apa) {
  require_tokens(text_tokens, "text");
  require_tokens(image_tokens, "image");
  auto xb = as_batched(x);
  auto q = matmul(xb, p.wq);
  auto tb = as_batched(text_tokens), ib = as_batched(image_tokens);
  auto text = scaled_dot_attention(q, matmul(tb, p.wk1), matmul(tb, p.wv1), p.heads);
  auto image = scaled_dot_attention(q, matmul(ib, p.wk2), matmul(ib, p.wv2), p.heads);
  auto y = add(mul(text, apa.alpha1), mul(image, apa.alpha2));
  return restore_rank(y, x.rank());
}

#define MAGDIFF_INSTANTIATE(T)                                                                                   \
  template Tensor<T> attention_weights(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scaled_dot_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t);   \
  template Tensor<T> self_attention(const Tensor<T>&, const SelfAttentionParams<T>&);                           \
  template Tensor<T> cross_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,    \
                                     const Tensor<T>&, std::size_t);                                            \
  template Tensor<T> fpa_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                   const CrossAttentionParams<T>&);                                             \
  template Tensor<T> apa_attention(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,                        \
                                   const CrossAttentionParams<T>&, const ApaWeights<T>&);

MAGDIFF_INSTANTIATE(float)
MAGDIFF_INSTANTIATE(double)

}  // namespace magdiff
