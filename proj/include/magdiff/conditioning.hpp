#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "magdiff/layers.hpp"
#include "magdiff/vae.hpp"

namespace magdiff {

/// Word-level vocabulary. Ids 0..2 are reserved for <pad>, <unk>, <null>.
/// On disk: one token per line, id = line index.
class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kNull = 2;

  Vocab();
  /// Reserved tokens followed by every caption word in first-seen order.
  static Vocab build(const std::vector<std::string>& captions);
  static Vocab load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  std::size_t size() const { return tokens_.size(); }
  std::size_t id(const std::string& word) const;
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  void add(const std::string& word);

  /// Lowercased, punctuation-stripped words mapped to ids, truncated to
  /// max_tokens. An empty caption gives a single <unk>.
  std::vector<std::size_t> encode(const std::string& caption, std::size_t max_tokens) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
struct TextPrompt {
  std::vector<std::size_t> tokens;
  Tensor<T> embedding;  // [L, d_txt]
};

/// Learned token table plus learned positional vectors (`<name>.table`,
/// `<name>.pos`).
template <typename T>
struct TextEncoder {
  Tensor<T> table;  // [V, d]
  Tensor<T> pos;    // [max_tokens, d]

  std::size_t max_tokens() const { return pos.dim(0); }
  std::size_t width() const { return pos.dim(1); }

  /// ids (≤ max_tokens) → [ids.size(), d].
  Tensor<T> embed_ids(const std::vector<std::size_t>& ids) const;
  /// Pads every id list with <pad> to max_tokens → [B, max_tokens, d].
  Tensor<T> embed_batch(const std::vector<std::vector<std::size_t>>& ids) const;
};

template <typename T>
TextEncoder<T> make_text_encoder(ParameterStore<T>& store, const std::string& name, std::size_t vocab_size,
                                 std::size_t max_tokens, std::size_t width, Rng& rng);

template <typename T>
TextPrompt<T> embed_text(const std::string& caption, const Vocab& vocab, const TextEncoder<T>& enc);

/// Ids of the null prompt: a single <null> token.
std::vector<std::size_t> null_prompt_ids();

struct SubjectPrompt {
  Tensor<float> subject_image;  // [3,H,W], frame ⊙ mask
  Tensor<float> mask;           // [1,H,W], values in {0,1}
  bool empty() const;
};

/// frame ⊙ mask. Throws ShapeError on dim mismatch, ValueError on a
/// non-binary mask.
SubjectPrompt extract_subject(const Tensor<float>& frame, const Tensor<float>& mask);

/// Small conv encoder producing L_img visual tokens from a subject image:
/// conv s2 3→16, conv s2 16→32, area pool to a √L_img grid, linear → d.
template <typename T>
struct ImageEncoder {
  Conv<T> conv0, conv1;
  Linear<T> proj;
  std::size_t grid = 2;

  std::size_t tokens() const { return grid * grid; }
  /// [B,3,H,W] → [B, L_img, d].
  Tensor<T> operator()(const Tensor<T>& images) const;
};

template <typename T>
ImageEncoder<T> make_image_encoder(ParameterStore<T>& store, const std::string& name, std::size_t l_img,
                                   std::size_t width, Rng& rng);

struct HfaConfig {
  std::vector<std::size_t> scales{48, 40, 32};
  std::size_t latent_size = 8;
};

/// Pre-fusion pyramid features of one subject image: the image resampled to
/// each scale (nearest up, area down), encoded by the frozen VAE, and each
/// latent area-resampled to latent_size → [scales·c_z, h, w]. Computed
/// without gradient.
Tensor<float> hfa_features(const Vae<float>& vae, const Tensor<float>& subject_image, const HfaConfig& cfg);

/// Learned fusion convs (`<name>.fuse0`, `<name>.fuse1`) mapping stacked
/// pyramid features to c_z channels.
template <typename T>
struct HfaFusion {
  Conv<T> fuse0, fuse1;

  /// features [N, scales·c_z, h, w] → [N, c_z, h, w]; rows with
  /// present[i] == 0 are exactly zero.
  Tensor<T> operator()(const Tensor<T>& features, const std::vector<std::uint8_t>& present) const;
};

template <typename T>
HfaFusion<T> make_hfa_fusion(ParameterStore<T>& store, const std::string& name, std::size_t in_channels,
                             std::size_t latent_channels, Rng& rng);

/// Per-frame z_s. Frames whose mask is empty (masked frames) give exact
/// zeros without touching the VAE.
std::vector<Tensor<float>> hfa_encode(const std::vector<SubjectPrompt>& subjects, const Vae<float>& vae,
                                      const HfaFusion<float>& fusion, const HfaConfig& cfg);

/// z_n [T,c_z,h,w] ⊕ z_s along channels → [T, 2·c_z, h, w].
template <typename T>
Tensor<T> build_denoiser_input(const Tensor<T>& z_n, const Tensor<T>& z_s);
Tensor<float> build_denoiser_input(const Tensor<float>& z_n, const std::vector<Tensor<float>>& z_s);

}  // namespace magdiff
