#pragma once

#include <memory>

#include "magdiff/checkpoint.hpp"
#include "magdiff/config.hpp"
#include "magdiff/corpus.hpp"
#include "magdiff/vae.hpp"

namespace magdiff {

// RunConfig → component options. Seeds of the separate stages are derived
// from RunConfig::seed with Rng::split so they never collide.

enum class SeedStream : std::uint64_t { kData = 1, kVaeInit, kVaeTrain, kDenoiserInit, kTrain, kSample };
std::uint64_t derive_seed(std::uint64_t seed, SeedStream stream);

CurationConfig curation_config(const RunConfig& rc);
PrepareOptions prepare_options(const RunConfig& rc);
VaeTrainOptions vae_train_options(const RunConfig& rc);
DenoiserConfig denoiser_config(const RunConfig& rc, std::size_t vocab_size);
TrainOptions train_options(const RunConfig& rc);
SamplerConfig sampler_config(const RunConfig& rc);
HfaConfig hfa_config(const RunConfig& rc);

/// Fresh denoiser around a trained VAE, with rc.freeze_policy applied.
ModelBundle init_model(const RunConfig& rc, std::unique_ptr<Vae<float>> vae, Vocab vocab);

/// Every frame of every clip (VAE pre-training data).
std::vector<Tensor<float>> all_frames(const std::vector<VideoClip>& clips);

}  // namespace magdiff
