#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

namespace magdiff {

/// Settings shared by every command. Text form: one `key = value` per line,
/// `#` starts a comment. Keys are the field names below.
struct RunConfig {
  std::uint64_t seed = 0;
  std::size_t resolution = 32;
  std::size_t frames = 8;
  std::size_t clips = 100;
  double lr = 5e-5;
  std::size_t batch_size = 64;
  std::size_t steps = 5000;
  double prompt_drop_p = 0.15;
  double edit_mode_p = 0.5;
  double cfg_scale = 7.5;
  std::size_t ddim_steps = 50;
  double eta = 0.0;
  std::string apa_mode = "trainable";
  std::string freeze_policy = "desk";
  std::size_t train_timesteps = 1000;
  std::size_t vae_steps = 2000;
  double vae_lr = 1e-3;
  std::size_t vae_batch_size = 16;
  std::size_t log_every = 50;
  std::size_t checkpoint_every = 0;
  double theta = 0.8;
  std::size_t min_short_side = 32;
  std::vector<std::size_t> hfa_scales{48, 40, 32};
  std::size_t max_tokens = 16;
  std::size_t image_tokens = 4;
  std::size_t base_channels = 32;
  std::size_t mid_channels = 64;
  std::size_t heads = 1;

  /// Sets one field from its text form; throws ValueError on an unknown key
  /// or unparsable value.
  void set(const std::string& key, const std::string& value);
  void validate() const;
  /// Applies MAGDIFF_SEED when set.
  void apply_env();
  nlohmann::json to_json() const;
  std::string to_text() const;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  /// Applies the keys present in `text` (same syntax as parse) on top of
  /// the current values.
  void update(const std::string& text);
  void update_from_file(const std::filesystem::path& path);
  static RunConfig from_json(const nlohmann::json& j);
  static std::vector<std::string> keys();
};

}  // namespace magdiff
