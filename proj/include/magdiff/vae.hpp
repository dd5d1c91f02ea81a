#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "magdiff/layers.hpp"

namespace magdiff {

/// Deterministic convolutional autoencoder, downsample factor 4, 4 latent
/// channels. Parameter names are prefixed `vae.`.
///
///   encoder: conv3x3 3→32, s2 conv 32→32, s2 conv 32→64, conv1x1 64→4
///   decoder: conv3x3 4→64, up2 + conv 64→32, up2 + conv 32→32, conv 32→3
///
/// `vae.latent_scale` (frozen scalar) multiplies encoder output and divides
/// decoder input so latents reach the diffusion model near unit variance.
template <typename T>
class Vae {
 public:
  static constexpr std::size_t kFactor = 4;
  static constexpr std::size_t kLatentChannels = 4;

  explicit Vae(std::uint64_t seed = 0);

  ParameterStore<T>& params() { return params_; }
  const ParameterStore<T>& params() const { return params_; }

  /// [N,3,H,W] → [N,4,H/4,W/4], or [3,H,W] → [4,H/4,W/4].
  Tensor<T> encode(const Tensor<T>& frames) const;
  /// Inverse shape mapping; output clamped to [0,1].
  Tensor<T> decode(const Tensor<T>& latents) const;
  /// Decoder without the output clamp (training path).
  Tensor<T> decode_raw(const Tensor<T>& latents) const;

  T latent_scale() const { return params_.at("vae.latent_scale").item(); }
  void set_latent_scale(T s);
  void freeze() { params_.set_all_trainable(false); }

 private:
  Tensor<T> encode_unscaled(const Tensor<T>& x) const;

  ParameterStore<T> params_;
  Conv<T> enc0_, enc1_, enc2_, enc_out_;
  Conv<T> dec_in_, dec1_, dec2_, dec_out_;
};

template <typename T>
Tensor<T> vae_encode(const Vae<T>& vae, const Tensor<T>& frame) {
  return vae.encode(frame);
}

template <typename T>
Tensor<T> vae_decode(const Vae<T>& vae, const Tensor<T>& z) {
  return vae.decode(z);
}

struct VaeTrainOptions {
  std::size_t steps = 2000;
  double lr = 1e-3;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;
  /// Log callback cadence; 0 disables.
  std::size_t log_every = 0;
};

struct VaeTrainResult {
  std::vector<double> losses;  // per step
  double initial_mse = 0;      // full-dataset reconstruction MSE before training
  double final_mse = 0;        // and after
};

/// Trains on the given frames ([3,H,W] each, values in [0,1]) by pixel MSE,
/// sets the latent scale to 1/std of the resulting latents, and freezes all
/// parameters before returning.
VaeTrainResult train_vae(Vae<float>& vae, const std::vector<Tensor<float>>& frames, const VaeTrainOptions& opts,
                         const std::function<void(std::size_t, double)>& log = {});

/// Mean squared reconstruction error of decode(encode(x)) over the frames.
double reconstruction_mse(const Vae<float>& vae, const std::vector<Tensor<float>>& frames);

/// Stacks [3,H,W] frames into [N,3,H,W].
template <typename T>
Tensor<T> stack_frames(const std::vector<Tensor<T>>& frames);

}  // namespace magdiff
