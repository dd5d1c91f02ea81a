#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "magdiff/conditioning.hpp"
#include "magdiff/data.hpp"
#include "magdiff/unet.hpp"

namespace magdiff {

/// Linear-β schedule. Index t runs over [0, steps); alpha_bar[t] is the
/// cumulative product of (1 − β) up to and including t.
struct NoiseSchedule {
  std::vector<double> betas;
  std::vector<double> alphas;
  std::vector<double> alpha_bar;

  static NoiseSchedule linear(std::size_t steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);
  std::size_t size() const { return betas.size(); }
  /// ᾱ at t, with ᾱ(−1) = 1 (the clean end of a trajectory).
  double alpha_bar_at(long t) const;
};

/// √ᾱ_t·z0 + √(1−ᾱ_t)·eps.
template <typename T>
Tensor<T> q_sample(const Tensor<T>& z0, long t, const Tensor<T>& eps, const NoiseSchedule& schedule);

/// DDIM update from t to t_prev (t_prev = −1 denotes the clean sample).
/// With eta > 0 fresh noise is drawn from `rng`, which is then required.
template <typename T>
Tensor<T> ddim_step(const Tensor<T>& x_t, const Tensor<T>& eps_hat, long t, long t_prev,
                    const NoiseSchedule& schedule, double eta = 0.0, Rng* rng = nullptr);

/// eps_uncond + scale·(eps_cond − eps_uncond).
template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_cond, const Tensor<T>& eps_uncond, double scale);

/// `steps` timesteps evenly spaced over [0, train_steps), descending, first
/// train_steps − 1 and last 0.
std::vector<long> ddim_timesteps(std::size_t train_steps, std::size_t steps);

struct SamplerConfig {
  std::size_t ddim_steps = 50;
  double eta = 0.0;
  double cfg_scale = 7.5;
  std::uint64_t seed = 0;

  void validate(const NoiseSchedule& schedule) const;
};

/// One clip with everything the frozen VAE contributes precomputed.
struct TrainExample {
  Tensor<float> z0;             // [T, c_z, h, w] scaled latents
  Tensor<float> hfa;            // [T, scales·c_z, h, w] pre-fusion pyramid features
  Tensor<float> subject_image;  // [3, H, W] frame 0 ⊙ mask 0
  std::vector<std::uint8_t> present;  // frames with a nonempty mask
  std::vector<std::size_t> text_ids;
};

/// Encodes every clip once. Throws ValueError when a clip has no masks.
std::vector<TrainExample> prepare_examples(const std::vector<VideoClip>& clips, const Vae<float>& vae,
                                           const Vocab& vocab, std::size_t max_tokens, const HfaConfig& hfa);

struct LossOptions {
  double prompt_drop_p = 0.15;
  /// Probability that a clip is presented in editing mode (every frame as
  /// reference) rather than generation mode (frame 0 only).
  double edit_mode_p = 0.5;
};

/// Inputs of one training step for a batch of clips.
struct DenoiseBatch {
  Tensor<float> z_in;  // [B, T, 2·c_z, h, w]
  Tensor<float> eps;   // [B, T, c_z, h, w]
  Conditioning<float> cond;
  std::vector<double> timesteps;
  std::vector<std::uint8_t> dropped;    // prompt replaced by the null prompt
  std::vector<std::uint8_t> edit_mode;  // every frame used as reference
};

/// Draws t, ε, mode and prompt drop per clip and builds the conditioned
/// denoiser input. A dropped clip gets the null text prompt, zero image
/// tokens and zero HFA latents.
DenoiseBatch make_denoise_batch(const Denoiser<float>& net, const std::vector<const TrainExample*>& batch,
                                const NoiseSchedule& schedule, Rng& rng, const LossOptions& opts);

/// MSE(ε̂, ε) over the batch.
Tensor<float> denoise_loss(const Denoiser<float>& net, const DenoiseBatch& batch);

struct TrainOptions {
  std::size_t steps = 5000;
  std::size_t batch_size = 8;
  double lr = 5e-5;
  LossOptions loss;
  std::uint64_t seed = 0;
  std::size_t log_every = 50;
  /// Trailing window for `final_loss`.
  std::size_t final_window = 100;
};

struct TrainLogEntry {
  std::size_t step = 0;
  double loss = 0;
  std::vector<std::pair<double, double>> alphas;
};

struct TrainResult {
  std::vector<double> losses;
  std::vector<TrainLogEntry> log;
  /// Mean of the last `final_window` step losses.
  double final_loss = 0;
};

/// Adam on the trainable parameters; clip order reshuffled every epoch.
/// Throws NumericError on a non-finite loss. `on_step` runs after every
/// optimizer step with the 1-based count of completed steps.
TrainResult train_denoiser(Denoiser<float>& net, const std::vector<TrainExample>& examples,
                           const NoiseSchedule& schedule, const TrainOptions& opts,
                           const std::function<void(const TrainLogEntry&)>& on_log = {},
                           const std::function<void(std::size_t)>& on_step = {});

/// Everything inference needs; references stay owned by the caller.
struct InferenceContext {
  const Denoiser<float>& net;
  const Vae<float>& vae;
  const Vocab& vocab;
  const HfaConfig& hfa;
  const NoiseSchedule& schedule;
};

/// Runs the DDIM loop from seeded noise with CFG against the dual-null
/// prompt. references: one SubjectPrompt per frame (empty = masked).
Tensor<float> sample_latents(const InferenceContext& ctx, const std::vector<SubjectPrompt>& references,
                             const Tensor<float>& subject_image, const std::string& caption,
                             const SamplerConfig& sampler);

/// Generation mode: frame 0 references the subject, the other frames are
/// masked. Output masks repeat the subject mask.
VideoClip sample_video(const InferenceContext& ctx, const SubjectPrompt& subject, const std::string& caption,
                       std::size_t frames, const SamplerConfig& sampler);

/// Editing mode: every source frame's subject region is a reference.
VideoClip edit_video(const InferenceContext& ctx, const VideoClip& source, const std::string& edit_caption,
                     const SamplerConfig& sampler);

}  // namespace magdiff
