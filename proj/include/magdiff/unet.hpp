#pragma once

#include <string>
#include <vector>

#include "magdiff/attention.hpp"
#include "magdiff/conditioning.hpp"

namespace magdiff {

enum class ApaMode { kTrainable, kFixed, kFpa };

/// "trainable", "fixed:<a1>,<a2>" or "fpa".
struct ApaSetting {
  ApaMode mode = ApaMode::kTrainable;
  double alpha1 = 0.5;
  double alpha2 = 0.5;

  static ApaSetting parse(const std::string& text);
  std::string str() const;
};

struct DenoiserConfig {
  std::size_t latent_channels = 4;
  std::size_t base_channels = 32;
  std::size_t mid_channels = 64;
  std::size_t groups = 8;
  std::size_t time_dim = 64;
  std::size_t text_width = 32;  // d_txt
  std::size_t max_tokens = 16;
  std::size_t image_tokens = 4;  // L_img
  std::size_t heads = 1;
  std::size_t max_frames = 8;
  std::size_t vocab_size = 64;
  std::size_t hfa_channels = 12;  // pyramid levels × latent channels
  ApaSetting apa;

  void validate() const;
};

/// Per-frame conditioning for a batch of B clips.
template <typename T>
struct Conditioning {
  Tensor<T> text;   // [B, L_txt, d_txt]
  Tensor<T> image;  // [B, L_img, d_txt]
};

/// Noise predictor f(z_t ⊕ z_s; c_s, c_t, t) with two resolution levels.
///
/// Parameter naming (checkpoint contract):
///   cond.text.{table,pos}            text table and positions
///   cond.image.{conv0,conv1,proj}.*  image-token encoder
///   cond.hfa.{fuse0,fuse1}.*         HFA fusion convs
///   unet.time_mlp.{0,1}.*            timestep MLP
///   unet.conv_in.*                   2·c_z → base conv
///   unet.<stack>.res.*               resnet block
///   unet.<stack>.temp_conv.*         temporal conv (kernel 3 along frames)
///   unet.<stack>.self_attn.*         spatial self-attention
///   unet.<stack>.apa.*               dual-prompt cross-attention (+ alpha1/alpha2)
///   unet.<stack>.temp_attn.*         temporal attention
///   unet.down.*, unet.up_res.*       level transitions
///   unet.out_norm.*, unet.conv_out.* output head
/// with <stack> ∈ {down0, mid, up0}.
template <typename T>
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& cfg, std::uint64_t seed);
  Denoiser(const Denoiser&) = delete;
  Denoiser& operator=(const Denoiser&) = delete;

  const DenoiserConfig& config() const { return cfg_; }
  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }

  const TextEncoder<T>& text_encoder() const { return text_; }
  const ImageEncoder<T>& image_encoder() const { return image_; }
  const HfaFusion<T>& hfa_fusion() const { return hfa_; }

  /// Text ids per clip → [B, max_tokens, d_txt].
  Tensor<T> embed_text_batch(const std::vector<std::vector<std::size_t>>& ids) const;
  /// Subject images [B,3,H,W] → [B, L_img, d_txt].
  Tensor<T> image_tokens(const Tensor<T>& subject_images) const;
  /// Zero image tokens (null image prompt) for B clips.
  Tensor<T> null_image_tokens(std::size_t batch) const;

  /// z_in: [B, T, 2·c_z, h, w] (or [T, 2·c_z, h, w] for B = 1); one timestep
  /// per clip. Returns ε̂ with c_z channels and the same leading dims.
  Tensor<T> forward(const Tensor<T>& z_in, const std::vector<double>& timesteps, const Conditioning<T>& cond) const;

  /// Current (α1, α2) of every APA block, in stack order.
  std::vector<std::pair<double, double>> alphas() const;

  /// Sets trainable flags: "default" (frozen trunk), "desk" (whole
  /// denoiser), "train-all" (nothing frozen). Fixed α stays frozen under
  /// default and desk.
  void apply_freeze_policy(const std::string& policy);

 private:
  struct ResBlock {
    GroupNorm<T> norm1, norm2;
    Conv<T> conv1, conv2;
    Linear<T> temb;
    std::optional<Conv<T>> skip;
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& temb_act) const;
  };
  struct TempConv {
    GroupNorm<T> norm;
    Conv<T> conv;
    Tensor<T> operator()(const Tensor<T>& x, std::size_t b, std::size_t t) const;
  };
  struct SelfAttn {
    GroupNorm<T> norm;
    SelfAttentionParams<T> attn;
    Linear<T> out;
    Tensor<T> operator()(const Tensor<T>& x) const;
  };
  struct Apa {
    GroupNorm<T> norm;
    CrossAttentionParams<T> attn;
    std::optional<ApaWeights<T>> alpha;  // absent in FPA mode
    Linear<T> out;
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& text, const Tensor<T>& image) const;
  };
  struct TempAttn {
    GroupNorm<T> norm;
    SelfAttentionParams<T> attn;
    Tensor<T> pos;  // [max_frames, C]
    Linear<T> out;
    Tensor<T> operator()(const Tensor<T>& x, std::size_t b, std::size_t t) const;
  };
  struct Stack {
    ResBlock res;
    TempConv temp_conv;
    SelfAttn self_attn;
    Apa apa;
    TempAttn temp_attn;
    Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& temb_act, const Tensor<T>& text, const Tensor<T>& image,
                         std::size_t b, std::size_t t) const;
  };

  ResBlock make_res(const std::string& name, std::size_t cin, std::size_t cout, Rng& rng);
  Stack make_stack(const std::string& name, std::size_t channels, Rng& rng);
  Tensor<T> time_embedding(const std::vector<double>& timesteps, std::size_t frames) const;

  DenoiserConfig cfg_;
  ParameterStore<T> params_;
  TextEncoder<T> text_;
  ImageEncoder<T> image_;
  HfaFusion<T> hfa_;
  Linear<T> time0_, time1_;
  Conv<T> conv_in_, down_, conv_out_;
  GroupNorm<T> out_norm_;
  ResBlock up_res_;
  std::vector<Stack> stacks_;  // down0, mid, up0
};

/// Sinusoidal embedding of width `dim` for each timestep → [N, dim].
template <typename T>
Tensor<T> timestep_features(const std::vector<double>& timesteps, std::size_t dim);

/// Attention along the frame axis only: x [B·T, C, h, w] is regrouped into
/// h·w sequences of T tokens, `pos` [≥T, C] is added, and `out` projects the
/// result. Returns [B·T, C, h, w] without the residual.
template <typename T>
Tensor<T> temporal_attention(const Tensor<T>& x, std::size_t b, std::size_t t, const SelfAttentionParams<T>& attn,
                             const Tensor<T>& pos, const Linear<T>& out);

/// Whether the default policy trains a parameter. Throws ValueError for
/// names outside the documented scheme.
bool default_policy_trainable(const std::string& name);

}  // namespace magdiff
