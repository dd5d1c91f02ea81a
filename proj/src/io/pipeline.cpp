#include "magdiff/pipeline.hpp"

namespace magdiff {

std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream) {
  return Rng(seed).split(static_cast<std::uint64_t>(stream)).next_u64();
}

CurationConfig curation_config(const RunConfig& rc) {
  CurationConfig c;
  c.theta = rc.theta;
  c.min_short_side = rc.min_short_side;
  c.subject_aware = synthetic_subject_aware_list();
  return c;
}

PrepareOptions prepare_options(const RunConfig& rc) {
  PrepareOptions o;
  o.clips = rc.clips;
  o.seed = derive_seed(rc.seed, SeedStream::kData);
  o.base.width = rc.resolution;
  o.base.height = rc.resolution;
  o.base.frames = rc.frames;
  o.curation = curation_config(rc);
  return o;
}

VaeTrainOptions vae_train_options(const RunConfig& rc) {
  VaeTrainOptions o;
  o.steps = rc.vae_steps;
  o.lr = rc.vae_lr;
  o.batch_size = rc.vae_batch_size;
  o.seed = derive_seed(rc.seed, SeedStream::kVaeTrain);
  o.log_every = rc.log_every;
  return o;
}

DenoiserConfig denoiser_config(const RunConfig& rc, std::size_t vocab_size) {
  DenoiserConfig c;
  c.base_channels = rc.base_channels;
  c.mid_channels = rc.mid_channels;
  c.max_tokens = rc.max_tokens;
  c.image_tokens = rc.image_tokens;
  c.heads = rc.heads;
  c.max_frames = rc.frames;
  c.vocab_size = vocab_size;
  c.hfa_channels = rc.hfa_scales.size() * Vae<float>::kLatentChannels;
  c.apa = ApaSetting::parse(rc.apa_mode);
  c.validate();
  return c;
}

TrainOptions train_options(const RunConfig& rc) {
  TrainOptions o;
  o.steps = rc.steps;
  o.batch_size = rc.batch_size;
  o.lr = rc.lr;
  o.loss.prompt_drop_p = rc.prompt_drop_p;
  o.loss.edit_mode_p = rc.edit_mode_p;
  o.seed = derive_seed(rc.seed, SeedStream::kTrain);
  o.log_every = rc.log_every;
  return o;
}

SamplerConfig sampler_config(const RunConfig& rc) {
  SamplerConfig s;
  s.ddim_steps = rc.ddim_steps;
  s.eta = rc.eta;
  s.cfg_scale = rc.cfg_scale;
  s.seed = derive_seed(rc.seed, SeedStream::kSample);
  return s;
}

HfaConfig hfa_config(const RunConfig& rc) {
  HfaConfig h;
  h.scales = rc.hfa_scales;
  h.latent_size = rc.resolution / Vae<float>::kFactor;
  return h;
}

ModelBundle init_model(const RunConfig& rc, std::unique_ptr<Vae<float>> vae, Vocab vocab) {
  rc.validate();
  ModelBundle b;
  b.vae = std::move(vae);
  b.vae->freeze();
  b.net = std::make_unique<Denoiser<float>>(denoiser_config(rc, vocab.size()),
                                            derive_seed(rc.seed, SeedStream::kDenoiserInit));
  b.net->apply_freeze_policy(rc.freeze_policy);
  b.vocab = std::move(vocab);
  b.hfa = hfa_config(rc);
  b.schedule = NoiseSchedule::linear(rc.train_timesteps);
  return b;
}

std::vector<Tensor<float>> all_frames(const std::vector<VideoClip>& clips) {
  std::vector<Tensor<float>> frames;
  for (const auto& c : clips) frames.insert(frames.end(), c.frames.begin(), c.frames.end());
  return frames;
}

}  // namespace magdiff
