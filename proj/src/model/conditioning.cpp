#include "magdiff/conditioning.hpp"

#include <cmath>
#include <fstream>

#include "magdiff/curation.hpp"

namespace magdiff {

Vocab::Vocab() {
  for (const char* t : {"<pad>", "<unk>", "<null>"}) add(t);
}

void Vocab::add(const std::string& word) {
  if (index_.count(word)) return;
  index_.emplace(word, tokens_.size());
  tokens_.push_back(word);
}

Vocab Vocab::build(const std::vector<std::string>& captions) {
  Vocab v;
  for (const auto& c : captions) {
    for (const auto& w : tokenize_words(c)) v.add(w);
  }
  return v;
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open vocabulary '" + path.string() + "'");
  Vocab v;
  v.tokens_.clear();
  v.index_.clear();
  std::string line;
  while (std::getline(in, line)) {
    if (v.index_.count(line)) throw IoError("duplicate token '" + line + "' in '" + path.string() + "'");
    v.index_.emplace(line, v.tokens_.size());
    v.tokens_.push_back(line);
  }
  if (v.tokens_.size() < 3 || v.tokens_[kPad] != "<pad>" || v.tokens_[kUnk] != "<unk>" || v.tokens_[kNull] != "<null>") {
    throw IoError("vocabulary '" + path.string() + "' lacks the reserved <pad>/<unk>/<null> lines");
  }
  return v;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write vocabulary '" + path.string() + "'");
  for (const auto& t : tokens_) out << t << '\n';
}

std::size_t Vocab::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

std::vector<std::size_t> Vocab::encode(const std::string& caption, std::size_t max_tokens) const {
  std::vector<std::size_t> ids;
  for (const auto& w : tokenize_words(caption)) {
    if (ids.size() == max_tokens) break;
    ids.push_back(id(w));
  }
  if (ids.empty()) ids.push_back(kUnk);
  return ids;
}

std::vector<std::size_t> null_prompt_ids() { return {Vocab::kNull}; }

template <typename T>
Tensor<T> TextEncoder<T>::embed_ids(const std::vector<std::size_t>& ids) const {
  if (ids.empty() || ids.size() > max_tokens()) {
    throw ShapeError("text prompt length " + std::to_string(ids.size()) + " outside [1, " +
                     std::to_string(max_tokens()) + "]");
  }
  for (auto id : ids) {
    if (id >= table.dim(0)) throw ValueError("token id " + std::to_string(id) + " outside the vocabulary");
  }
  return add(embedding(table, ids), slice(pos, 0, 0, ids.size()));
}

template <typename T>
Tensor<T> TextEncoder<T>::embed_batch(const std::vector<std::vector<std::size_t>>& ids) const {
  std::vector<std::size_t> flat;
  for (const auto& row : ids) {
    if (row.empty() || row.size() > max_tokens()) throw ShapeError("text prompt length out of range");
    flat.insert(flat.end(), row.begin(), row.end());
    flat.insert(flat.end(), max_tokens() - row.size(), Vocab::kPad);
  }
  auto e = reshape(embedding(table, flat), {ids.size(), max_tokens(), width()});
  return add_bias(e, pos);
}

template <typename T>
TextEncoder<T> make_text_encoder(ParameterStore<T>& store, const std::string& name, std::size_t vocab_size,
                                 std::size_t max_tokens, std::size_t width, Rng& rng) {
  TextEncoder<T> e;
  e.table = store.add(name + ".table", Tensor<T>({vocab_size, width}, rng.normal_vector<T>(vocab_size * width, 1.0)));
  e.pos = store.add(name + ".pos", Tensor<T>({max_tokens, width}, rng.normal_vector<T>(max_tokens * width, 0.1)));
  return e;
}

template <typename T>
TextPrompt<T> embed_text(const std::string& caption, const Vocab& vocab, const TextEncoder<T>& enc) {
  TextPrompt<T> p;
  p.tokens = vocab.encode(caption, enc.max_tokens());
  p.embedding = enc.embed_ids(p.tokens);
  return p;
}

bool SubjectPrompt::empty() const {
  for (auto v : mask.data()) {
    if (v != 0.0f) return false;
  }
  return true;
}

SubjectPrompt extract_subject(const Tensor<float>& frame, const Tensor<float>& mask) {
  if (frame.rank() != 3 || frame.dim(0) != 3) throw ShapeError("frame must be [3,H,W], got " + shape_str(frame.shape()));
  if (mask.shape() != Shape{1, frame.dim(1), frame.dim(2)}) {
    throw ShapeError("mask " + shape_str(mask.shape()) + " does not match frame " + shape_str(frame.shape()));
  }
  const std::size_t hw = frame.dim(1) * frame.dim(2);
  std::vector<float> out(frame.numel());
  for (std::size_t i = 0; i < hw; ++i) {
    const float m = mask.at(i);
    if (m != 0.0f && m != 1.0f) throw ValueError("subject mask must be binary");
    for (std::size_t c = 0; c < 3; ++c) out[c * hw + i] = m == 1.0f ? frame.at(c * hw + i) : 0.0f;
  }
  return {Tensor<float>(frame.shape(), std::move(out)), mask.detach()};
}

template <typename T>
Tensor<T> ImageEncoder<T>::operator()(const Tensor<T>& images) const {
  if (images.rank() != 4 || images.dim(1) != 3) {
    throw ShapeError("image encoder expects [B,3,H,W], got " + shape_str(images.shape()));
  }
  auto h = silu(conv0(images));
  h = silu(conv1(h));
  h = resample2d(h, grid, grid, ResampleMode::kArea);
  const std::size_t b = h.dim(0), c = h.dim(1);
  auto tokens = permute(reshape(h, {b, c, grid * grid}), {0, 2, 1});
  return proj(tokens);
}

template <typename T>
ImageEncoder<T> make_image_encoder(ParameterStore<T>& store, const std::string& name, std::size_t l_img,
                                   std::size_t width, Rng& rng) {
  const auto g = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(l_img))));
  if (g == 0 || g * g != l_img) throw ValueError("image token count must be a positive square, got " + std::to_string(l_img));
  ImageEncoder<T> e;
  e.conv0 = make_conv(store, name + ".conv0", 16, 3, {3, 3}, rng, {2, 2}, {1, 1});
  e.conv1 = make_conv(store, name + ".conv1", 32, 16, {3, 3}, rng, {2, 2}, {1, 1});
  e.proj = make_linear(store, name + ".proj", 32, width, rng);
  e.grid = g;
  return e;
}

Tensor<float> hfa_features(const Vae<float>& vae, const Tensor<float>& subject_image, const HfaConfig& cfg) {
  if (subject_image.rank() != 3 || subject_image.dim(0) != 3) {
    throw ShapeError("subject image must be [3,H,W], got " + shape_str(subject_image.shape()));
  }
  NoGradGuard no_grad;
  const std::size_t h = subject_image.dim(1), w = subject_image.dim(2);
  auto x = reshape(subject_image, {1, 3, h, w});
  std::vector<Tensor<float>> levels;
  for (auto s : cfg.scales) {
    const auto mode = s > h ? ResampleMode::kNearest : ResampleMode::kArea;
    auto xs = (s == h && s == w) ? x : resample2d(x, s, s, mode);
    auto z = vae.encode(xs);
    levels.push_back(resample2d(z, cfg.latent_size, cfg.latent_size, ResampleMode::kArea));
  }
  auto f = concat(levels, 1);
  return reshape(f, {f.dim(1), f.dim(2), f.dim(3)});
}

template <typename T>
Tensor<T> HfaFusion<T>::operator()(const Tensor<T>& features, const std::vector<std::uint8_t>& present) const {
  if (features.rank() != 4 || features.dim(0) != present.size()) {
    throw ShapeError("HFA features " + shape_str(features.shape()) + " do not match " + std::to_string(present.size()) +
                     " presence flags");
  }
  const std::size_t n = features.dim(0), h = features.dim(2), w = features.dim(3);
  const std::size_t c = fuse1.weight.dim(0);
  bool any = false;
  for (auto p : present) any = any || p;
  if (!any) return Tensor<T>::zeros({n, c, h, w});
  auto z = fuse1(silu(fuse0(features)));
  bool all = true;
  for (auto p : present) all = all && p;
  if (all) return z;
  std::vector<T> gate(n * c * h * w);
  for (std::size_t i = 0; i < n; ++i) std::fill_n(gate.begin() + i * c * h * w, c * h * w, present[i] ? T(1) : T(0));
  auto out = mul(z, Tensor<T>({n, c, h, w}, std::move(gate)));
  // Scrub signed zeros so masked frames are bit-exact zeros.
  auto d = out.mutable_data();
  for (std::size_t i = 0; i < n; ++i) {
    if (!present[i]) std::fill_n(d.begin() + i * c * h * w, c * h * w, T(0));
  }
  return out;
}

template <typename T>
HfaFusion<T> make_hfa_fusion(ParameterStore<T>& store, const std::string& name, std::size_t in_channels,
                             std::size_t latent_channels, Rng& rng) {
  HfaFusion<T> f;
  f.fuse0 = make_conv(store, name + ".fuse0", 32, in_channels, {3, 3}, rng, {}, {1, 1});
  f.fuse1 = make_conv(store, name + ".fuse1", latent_channels, 32, {3, 3}, rng, {}, {1, 1}, Init::kFanIn);
  return f;
}

std::vector<Tensor<float>> hfa_encode(const std::vector<SubjectPrompt>& subjects, const Vae<float>& vae,
                                      const HfaFusion<float>& fusion, const HfaConfig& cfg) {
  if (subjects.empty()) return {};
  const Shape s0 = subjects[0].subject_image.shape();
  const std::size_t channels = cfg.scales.size() * Vae<float>::kLatentChannels;
  std::vector<Tensor<float>> feats;
  std::vector<std::uint8_t> present;
  for (const auto& s : subjects) {
    if (s.subject_image.shape() != s0) throw ShapeError("HFA subject frames must share dimensions");
    const bool on = !s.empty();
    present.push_back(on ? 1 : 0);
    feats.push_back(on ? hfa_features(vae, s.subject_image, cfg)
                       : Tensor<float>::zeros({channels, cfg.latent_size, cfg.latent_size}));
  }
  NoGradGuard no_grad;
  auto z = fusion(stack_frames(feats), present);
  std::vector<Tensor<float>> out;
  const std::size_t c = z.dim(1), h = z.dim(2), w = z.dim(3);
  for (std::size_t i = 0; i < subjects.size(); ++i) {
    out.push_back(reshape(slice(z, 0, i, i + 1), {c, h, w}));
  }
  return out;
}

template <typename T>
Tensor<T> build_denoiser_input(const Tensor<T>& z_n, const Tensor<T>& z_s) {
  if (z_n.rank() != 4 || z_n.shape() != z_s.shape()) {
    throw ShapeError("z_n " + shape_str(z_n.shape()) + " and z_s " + shape_str(z_s.shape()) + " must match");
  }
  return concat<T>({z_n, z_s}, 1);
}

Tensor<float> build_denoiser_input(const Tensor<float>& z_n, const std::vector<Tensor<float>>& z_s) {
  if (z_n.rank() != 4 || z_s.size() != z_n.dim(0)) {
    throw ShapeError("expected " + std::to_string(z_n.rank() == 4 ? z_n.dim(0) : 0) + " HFA latents, got " +
                     std::to_string(z_s.size()));
  }
  return build_denoiser_input(z_n, stack_frames(z_s));
}

#define MAGDIFF_INSTANTIATE(T)                                                                                  \
  template struct TextEncoder<T>;                                                                              \
  template struct ImageEncoder<T>;                                                                             \
  template struct HfaFusion<T>;                                                                                \
  template TextEncoder<T> make_text_encoder(ParameterStore<T>&, const std::string&, std::size_t, std::size_t,  \
                                            std::size_t, Rng&);                                                \
  template TextPrompt<T> embed_text(const std::string&, const Vocab&, const TextEncoder<T>&);                  \
  template ImageEncoder<T> make_image_encoder(ParameterStore<T>&, const std::string&, std::size_t, std::size_t, \
                                              Rng&);                                                           \
  template HfaFusion<T> make_hfa_fusion(ParameterStore<T>&, const std::string&, std::size_t, std::size_t, Rng&); \
  template Tensor<T> build_denoiser_input(const Tensor<T>&, const Tensor<T>&);

MAGDIFF_INSTANTIATE(float)
MAGDIFF_INSTANTIATE(double)

}  // namespace magdiff
