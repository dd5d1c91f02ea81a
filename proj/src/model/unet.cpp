#include "magdiff/unet.hpp"

#include <cmath>
#include <cstdio>

namespace magdiff {

ApaSetting ApaSetting::parse(const std::string& text) {
  ApaSetting s;
  if (text == "trainable") return s;
  if (text == "fpa") {
    s.mode = ApaMode::kFpa;
    s.alpha1 = s.alpha2 = 1.0;
    return s;
  }
  if (text.rfind("fixed:", 0) == 0) {
    const std::string rest = text.substr(6);
    const auto comma = rest.find(',');
    if (comma != std::string::npos) {
      try {
        std::size_t n1 = 0, n2 = 0;
        s.alpha1 = std::stod(rest.substr(0, comma), &n1);
        s.alpha2 = std::stod(rest.substr(comma + 1), &n2);
        if (n1 == comma && n2 == rest.size() - comma - 1 && std::isfinite(s.alpha1) && std::isfinite(s.alpha2)) {
          s.mode = ApaMode::kFixed;
          return s;
        }
      } catch (const std::exception&) {
      }
    }
  }
  throw ValueError("apa mode must be 'trainable', 'fpa' or 'fixed:<a1>,<a2>', got '" + text + "'");
}

std::string ApaSetting::str() const {
  switch (mode) {
    case ApaMode::kTrainable: return "trainable";
    case ApaMode::kFpa: return "fpa";
    case ApaMode::kFixed: break;
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "fixed:%g,%g", alpha1, alpha2);
  return buf;
}

void DenoiserConfig::validate() const {
  if (base_channels % groups || mid_channels % groups || (base_channels + mid_channels) % groups) {
    throw ValueError("channel widths must be divisible by the group count");
  }
  if (base_channels % heads || mid_channels % heads || text_width % heads) {
    throw ValueError("attention widths must be divisible by the head count");
  }
  if (time_dim % 2 || max_frames == 0 || max_tokens == 0 || vocab_size < 3) throw ValueError("invalid denoiser config");
}

namespace {

template <typename T>
void shrink(Tensor<T> t, T factor) {
  for (auto& v : t.mutable_data()) v *= factor;
}

template <typename T>
SelfAttentionParams<T> make_self_attn_params(ParameterStore<T>& store, const std::string& name, std::size_t width,
                                             std::size_t heads, Rng& rng) {
  SelfAttentionParams<T> p;
  p.wq = store.add(name + ".wq", init_tensor<T>({width, width}, width, Init::kFanIn, rng));
  p.wk = store.add(name + ".wk", init_tensor<T>({width, width}, width, Init::kFanIn, rng));
  p.wv = store.add(name + ".wv", init_tensor<T>({width, width}, width, Init::kFanIn, rng));
  p.heads = heads;
  return p;
}

// [N, C, h, w] ↔ [N, h·w, C]
template <typename T>
Tensor<T> to_tokens(const Tensor<T>& x) {
  return permute(reshape(x, {x.dim(0), x.dim(1), x.dim(2) * x.dim(3)}), {0, 2, 1});
}

template <typename T>
Tensor<T> from_tokens(const Tensor<T>& t, std::size_t h, std::size_t w) {
  return reshape(permute(t, {0, 2, 1}), {t.dim(0), t.dim(2), h, w});
}

}  // namespace

template <typename T>
Tensor<T> timestep_features(const std::vector<double>& timesteps, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<T> out(timesteps.size() * dim);
  for (std::size_t n = 0; n < timesteps.size(); ++n) {
    for (std::size_t i = 0; i < half; ++i) {
      const double f = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      out[n * dim + i] = static_cast<T>(std::sin(timesteps[n] * f));
      out[n * dim + half + i] = static_cast<T>(std::cos(timesteps[n] * f));
    }
  }
  return Tensor<T>({timesteps.size(), dim}, std::move(out));
}

template <typename T>
typename Denoiser<T>::ResBlock Denoiser<T>::make_res(const std::string& name, std::size_t cin, std::size_t cout,
                                                     Rng& rng) {
  ResBlock r;
  r.norm1 = make_group_norm(params_, name + ".norm1", cin, cfg_.groups);
  r.conv1 = make_conv(params_, name + ".conv1", cout, cin, {3, 3}, rng, {}, {1, 1});
  r.temb = make_linear(params_, name + ".temb", cfg_.time_dim, cout, rng);
  r.norm2 = make_group_norm(params_, name + ".norm2", cout, cfg_.groups);
  r.conv2 = make_conv(params_, name + ".conv2", cout, cout, {3, 3}, rng, {}, {1, 1}, Init::kFanIn);
  if (cin != cout) r.skip = make_conv(params_, name + ".skip", cout, cin, {1, 1}, rng, {}, {}, Init::kFanIn);
  return r;
}

template <typename T>
typename Denoiser<T>::Stack Denoiser<T>::make_stack(const std::string& name, std::size_t c, Rng& rng) {
  Stack s;
  s.res = make_res(name + ".res", c, c, rng);

  s.temp_conv.norm = make_group_norm(params_, name + ".temp_conv.norm", c, cfg_.groups);
  s.temp_conv.conv = make_conv(params_, name + ".temp_conv.conv", c, c, {3, 1, 1}, rng, {}, {1, 0, 0}, Init::kFanIn);

  s.self_attn.norm = make_group_norm(params_, name + ".self_attn.norm", c, cfg_.groups);
  s.self_attn.attn = make_self_attn_params(params_, name + ".self_attn", c, cfg_.heads, rng);
  s.self_attn.out = make_linear(params_, name + ".self_attn.out", c, c, rng);

  const std::size_t d = cfg_.text_width;
  auto& a = s.apa;
  a.norm = make_group_norm(params_, name + ".apa.norm", c, cfg_.groups);
  a.attn.wq = params_.add(name + ".apa.wq", init_tensor<T>({c, c}, c, Init::kFanIn, rng));
  if (cfg_.apa.mode == ApaMode::kFpa) {
    a.attn.wq2 = params_.add(name + ".apa.wq2", init_tensor<T>({c, c}, c, Init::kFanIn, rng));
  }
  a.attn.wk1 = params_.add(name + ".apa.wk1", init_tensor<T>({d, c}, d, Init::kFanIn, rng));
  a.attn.wv1 = params_.add(name + ".apa.wv1", init_tensor<T>({d, c}, d, Init::kFanIn, rng));
  a.attn.wk2 = params_.add(name + ".apa.wk2", init_tensor<T>({d, c}, d, Init::kFanIn, rng));
  a.attn.wv2 = params_.add(name + ".apa.wv2", init_tensor<T>({d, c}, d, Init::kFanIn, rng));
  a.attn.heads = cfg_.heads;
  if (cfg_.apa.mode != ApaMode::kFpa) {
    const bool trainable = cfg_.apa.mode == ApaMode::kTrainable;
    ApaWeights<T> w;
    w.alpha1 = params_.add(name + ".apa.alpha1", Tensor<T>::full({1}, static_cast<T>(cfg_.apa.alpha1)), trainable);
    w.alpha2 = params_.add(name + ".apa.alpha2", Tensor<T>::full({1}, static_cast<T>(cfg_.apa.alpha2)), trainable);
    a.alpha = w;
  }
  a.out = make_linear(params_, name + ".apa.out", c, c, rng);

  auto& ta = s.temp_attn;
  ta.norm = make_group_norm(params_, name + ".temp_attn.norm", c, cfg_.groups);
  ta.attn = make_self_attn_params(params_, name + ".temp_attn", c, cfg_.heads, rng);
  ta.pos = params_.add(name + ".temp_attn.pos",
                       Tensor<T>({cfg_.max_frames, c}, rng.normal_vector<T>(cfg_.max_frames * c, 0.1)));
  ta.out = make_linear(params_, name + ".temp_attn.out", c, c, rng);
  return s;
}

template <typename T>
Denoiser<T>::Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const std::size_t cz = cfg_.latent_channels, c0 = cfg_.base_channels, c1 = cfg_.mid_channels;
  text_ = make_text_encoder(params_, "cond.text", cfg_.vocab_size, cfg_.max_tokens, cfg_.text_width, rng);
  image_ = make_image_encoder(params_, "cond.image", cfg_.image_tokens, cfg_.text_width, rng);
  hfa_ = make_hfa_fusion(params_, "cond.hfa", cfg_.hfa_channels, cz, rng);
  time0_ = make_linear(params_, "unet.time_mlp.0", cfg_.time_dim / 2, cfg_.time_dim, rng);
  time1_ = make_linear(params_, "unet.time_mlp.1", cfg_.time_dim, cfg_.time_dim, rng);
  conv_in_ = make_conv(params_, "unet.conv_in", c0, 2 * cz, {3, 3}, rng, {}, {1, 1});
  stacks_.push_back(make_stack("unet.down0", c0, rng));
  down_ = make_conv(params_, "unet.down", c1, c0, {3, 3}, rng, {2, 2}, {1, 1});
  stacks_.push_back(make_stack("unet.mid", c1, rng));
  up_res_ = make_res("unet.up_res", c1 + c0, c0, rng);
  stacks_.push_back(make_stack("unet.up0", c0, rng));
  out_norm_ = make_group_norm(params_, "unet.out_norm", c0, cfg_.groups);
  conv_out_ = make_conv(params_, "unet.conv_out", cz, c0, {3, 3}, rng, {}, {1, 1}, Init::kFanIn);
  shrink(conv_out_.weight, T(0.1));
}

template <typename T>
Tensor<T> Denoiser<T>::ResBlock::operator()(const Tensor<T>& x, const Tensor<T>& temb_act) const {
  auto h = conv1(silu(norm1(x)));
  h = add_channel(h, temb(temb_act));
  h = conv2(silu(norm2(h)));
  return add(skip ? (*skip)(x) : x, h);
}

template <typename T>
Tensor<T> Denoiser<T>::TempConv::operator()(const Tensor<T>& x, std::size_t b, std::size_t t) const {
  const std::size_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
  auto y = reshape(silu(norm(x)), {b, t, c, h, w});
  y = conv(permute(y, {0, 2, 1, 3, 4}));
  y = reshape(permute(y, {0, 2, 1, 3, 4}), {b * t, c, h, w});
  return add(x, y);
}

template <typename T>
Tensor<T> Denoiser<T>::SelfAttn::operator()(const Tensor<T>& x) const {
  auto tokens = to_tokens(norm(x));
  auto y = out(self_attention(tokens, attn));
  return add(x, from_tokens(y, x.dim(2), x.dim(3)));
}

template <typename T>
Tensor<T> Denoiser<T>::Apa::operator()(const Tensor<T>& x, const Tensor<T>& text, const Tensor<T>& image) const {
  auto tokens = to_tokens(norm(x));
  auto y = alpha ? apa_attention(tokens, text, image, attn, *alpha) : fpa_attention(tokens, tokens, text, image, attn);
  return add(x, from_tokens(out(y), x.dim(2), x.dim(3)));
}

template <typename T>
Tensor<T> temporal_attention(const Tensor<T>& x, std::size_t b, std::size_t t, const SelfAttentionParams<T>& attn,
                             const Tensor<T>& pos, const Linear<T>& out) {
  if (x.rank() != 4 || x.dim(0) != b * t) {
    throw ShapeError("temporal attention input " + shape_str(x.shape()) + " is not [" + std::to_string(b * t) +
                     ",C,h,w]");
  }
  const std::size_t c = x.dim(1), h = x.dim(2), w = x.dim(3), hw = h * w;
  auto y = reshape(x, {b, t, c, hw});
  y = reshape(permute(y, {0, 3, 1, 2}), {b * hw, t, c});
  y = add_bias(y, slice(pos, 0, 0, t));
  y = out(self_attention(y, attn));
  y = permute(reshape(y, {b, hw, t, c}), {0, 2, 3, 1});
  return reshape(y, {b * t, c, h, w});
}

template <typename T>
Tensor<T> Denoiser<T>::TempAttn::operator()(const Tensor<T>& x, std::size_t b, std::size_t t) const {
  return add(x, temporal_attention(norm(x), b, t, attn, pos, out));
}

template <typename T>
Tensor<T> Denoiser<T>::Stack::operator()(const Tensor<T>& x, const Tensor<T>& temb_act, const Tensor<T>& text,
                                         const Tensor<T>& image, std::size_t b, std::size_t t) const {
  auto h = res(x, temb_act);
  h = temp_conv(h, b, t);
  h = self_attn(h);
  h = apa(h, text, image);
  return temp_attn(h, b, t);
}

template <typename T>
Tensor<T> Denoiser<T>::time_embedding(const std::vector<double>& timesteps, std::size_t frames) const {
  auto e = silu(time1_(silu(time0_(timestep_features<T>(timesteps, cfg_.time_dim / 2)))));
  return repeat_interleave(e, frames);
}

template <typename T>
Tensor<T> Denoiser<T>::embed_text_batch(const std::vector<std::vector<std::size_t>>& ids) const {
  return text_.embed_batch(ids);
}

template <typename T>
Tensor<T> Denoiser<T>::image_tokens(const Tensor<T>& subject_images) const {
  return image_(subject_images);
}

template <typename T>
Tensor<T> Denoiser<T>::null_image_tokens(std::size_t batch) const {
  return Tensor<T>::zeros({batch, image_.tokens(), cfg_.text_width});
}

template <typename T>
Tensor<T> Denoiser<T>::forward(const Tensor<T>& z_in, const std::vector<double>& timesteps,
                               const Conditioning<T>& cond) const {
  if (z_in.rank() != 4 && z_in.rank() != 5) {
    throw ShapeError("denoiser input must be [T,C,h,w] or [B,T,C,h,w], got " + shape_str(z_in.shape()));
  }
  const std::size_t off = z_in.rank() == 5 ? 1 : 0;
  const std::size_t b = off ? z_in.dim(0) : 1;
  const std::size_t t = z_in.dim(off), c = z_in.dim(off + 1), h = z_in.dim(off + 2), w = z_in.dim(off + 3);
  const std::size_t cz = cfg_.latent_channels;
  if (c != 2 * cz) {
    throw ShapeError("denoiser input needs " + std::to_string(2 * cz) + " channels, got " + shape_str(z_in.shape()));
  }
  if (t == 0 || t > cfg_.max_frames) {
    throw ShapeError("frame count " + std::to_string(t) + " outside [1, " + std::to_string(cfg_.max_frames) + "]");
  }
  if (h % 2 || w % 2) throw ShapeError("latent height and width must be even, got " + shape_str(z_in.shape()));
  if (timesteps.size() != b) throw ShapeError("need one timestep per clip");
  if (cond.text.rank() != 3 || cond.text.dim(0) != b || cond.text.dim(2) != cfg_.text_width) {
    throw ShapeError("text conditioning must be [" + std::to_string(b) + ",L," + std::to_string(cfg_.text_width) +
                     "], got " + shape_str(cond.text.shape()));
  }
  if (cond.image.rank() != 3 || cond.image.dim(0) != b || cond.image.dim(2) != cfg_.text_width) {
    throw ShapeError("image conditioning must be [" + std::to_string(b) + ",L," + std::to_string(cfg_.text_width) +
                     "], got " + shape_str(cond.image.shape()));
  }

  const auto temb = time_embedding(timesteps, t);
  const auto text = repeat_interleave(cond.text, t);
  const auto image = repeat_interleave(cond.image, t);

  auto x = conv_in_(reshape(z_in, {b * t, c, h, w}));
  x = stacks_[0](x, temb, text, image, b, t);
  const auto skip = x;
  x = down_(x);
  x = stacks_[1](x, temb, text, image, b, t);
  x = resample2d(x, h, w, ResampleMode::kNearest);
  x = up_res_(concat<T>({x, skip}, 1), temb);
  x = stacks_[2](x, temb, text, image, b, t);
  x = conv_out_(silu(out_norm_(x)));
  return off ? reshape(x, {b, t, cz, h, w}) : reshape(x, {t, cz, h, w});
}

template <typename T>
std::vector<std::pair<double, double>> Denoiser<T>::alphas() const {
  std::vector<std::pair<double, double>> out;
  for (const auto& s : stacks_) {
    if (s.apa.alpha) {
      out.emplace_back(static_cast<double>(s.apa.alpha->alpha1.item()), static_cast<double>(s.apa.alpha->alpha2.item()));
    } else {
      out.emplace_back(1.0, 1.0);
    }
  }
  return out;
}

bool default_policy_trainable(const std::string& name) {
  auto has = [&](const char* part) { return name.find(part) != std::string::npos; };
  auto starts = [&](const char* prefix) { return name.rfind(prefix, 0) == 0; };
  if (starts("vae.")) return false;
  if (starts("cond.text.") || starts("cond.image.") || starts("cond.hfa.")) return true;
  if (starts("unet.conv_in.")) return true;
  const bool in_stack = starts("unet.down0.") || starts("unet.mid.") || starts("unet.up0.");
  if (in_stack && (has(".temp_conv.") || has(".temp_attn.") || has(".self_attn.") || has(".apa."))) return true;
  if (in_stack && has(".res.")) return false;
  if (starts("unet.time_mlp.") || starts("unet.down.") || starts("unet.up_res.") || starts("unet.out_norm.") ||
      starts("unet.conv_out.")) {
    return false;
  }
  throw ValueError("parameter '" + name + "' is not covered by the freeze policy");
}

template <typename T>
void Denoiser<T>::apply_freeze_policy(const std::string& policy) {
  if (policy != "default" && policy != "desk" && policy != "train-all") {
    throw ValueError("unknown freeze policy '" + policy + "' (expected default, desk or train-all)");
  }
  const bool alpha_trainable = cfg_.apa.mode == ApaMode::kTrainable;
  for (const auto& e : params_.entries()) {
    bool on = policy == "default" ? default_policy_trainable(e.name) : true;
    const bool is_alpha = e.name.size() > 7 && (e.name.ends_with(".alpha1") || e.name.ends_with(".alpha2"));
    if (is_alpha && policy != "train-all") on = on && alpha_trainable;
    params_.set_trainable(e.name, on);
  }
}

template class Denoiser<float>;
template class Denoiser<double>;
template Tensor<float> timestep_features(const std::vector<double>&, std::size_t);
template Tensor<double> timestep_features(const std::vector<double>&, std::size_t);
template Tensor<float> temporal_attention(const Tensor<float>&, std::size_t, std::size_t,
                                          const SelfAttentionParams<float>&, const Tensor<float>&,
                                          const Linear<float>&);
template Tensor<double> temporal_attention(const Tensor<double>&, std::size_t, std::size_t,
                                           const SelfAttentionParams<double>&, const Tensor<double>&,
                                           const Linear<double>&);

}  // namespace magdiff
