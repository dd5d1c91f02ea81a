#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "magdiff/diffusion.hpp"

namespace magdiff {

/// On disk:
///   bytes 0..7    magic "MAGDIFF\0"
///   u32 LE        format version
///   u64 LE        header length N
///   N bytes       UTF-8 JSON header {format, version, config, payload_bytes,
///                 tensors: [{name, shape, offset, trainable}]}
///   payload       float32 LE values, tensors back to back in manifest order
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  struct Record {
    std::string name;
    Shape shape;
    bool trainable = false;
    std::vector<float> data;
  };

  nlohmann::json config = nlohmann::json::object();
  std::vector<Record> tensors;

  template <typename T>
  void add_store(const ParameterStore<T>& store);
  /// Copies values (and trainable flags when `flags`) into every parameter
  /// of `store`; throws ValueError when one is missing.
  template <typename T>
  void load_into(ParameterStore<T>& store, bool flags = true) const;
  bool contains(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes, const std::string& origin = "<memory>");
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

nlohmann::json denoiser_config_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);

/// A trained model: frozen VAE, denoiser (with its text/image/HFA encoders),
/// vocabulary and schedule.
struct ModelBundle {
  std::unique_ptr<Vae<float>> vae;
  std::unique_ptr<Denoiser<float>> net;
  Vocab vocab;
  HfaConfig hfa;
  NoiseSchedule schedule;

  InferenceContext context() const { return {*net, *vae, vocab, hfa, schedule}; }
  /// Config echo plus "model" {denoiser, hfa_scales, latent_size,
  /// train_timesteps, vocab}.
  Checkpoint to_checkpoint(const nlohmann::json& run_config) const;
  static ModelBundle from_checkpoint(const Checkpoint& ckpt);
};

/// A VAE-only checkpoint (the output of VAE pre-training).
Checkpoint vae_checkpoint(const Vae<float>& vae, const nlohmann::json& run_config);
std::unique_ptr<Vae<float>> vae_from_checkpoint(const Checkpoint& ckpt);

}  // namespace magdiff
