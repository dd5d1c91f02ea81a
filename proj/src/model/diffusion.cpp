#include "magdiff/diffusion.hpp"

#include <cmath>
#include <numeric>

#include "magdiff/curation.hpp"

namespace magdiff {

NoiseSchedule NoiseSchedule::linear(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 2) throw ValueError("noise schedule needs at least 2 steps");
  if (!(beta_start > 0 && beta_start < beta_end && beta_end < 1)) {
    throw ValueError("noise schedule needs 0 < beta_start < beta_end < 1");
  }
  NoiseSchedule s;
  double prod = 1.0;
  for (std::size_t t = 0; t < steps; ++t) {
    const double b = beta_start + (beta_end - beta_start) * static_cast<double>(t) / static_cast<double>(steps - 1);
    s.betas.push_back(b);
    s.alphas.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bar.push_back(prod);
  }
  return s;
}

double NoiseSchedule::alpha_bar_at(long t) const {
  if (t == -1) return 1.0;
  if (t < -1 || t >= static_cast<long>(size())) {
    throw ValueError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(size()) + ")");
  }
  return alpha_bar[static_cast<std::size_t>(t)];
}

template <typename T>
Tensor<T> q_sample(const Tensor<T>& z0, long t, const Tensor<T>& eps, const NoiseSchedule& schedule) {
  if (t < 0) throw ValueError("q_sample timestep must be non-negative, got " + std::to_string(t));
  if (z0.shape() != eps.shape()) {
    throw ShapeError("q_sample: z0 " + shape_str(z0.shape()) + " vs eps " + shape_str(eps.shape()));
  }
  const double ab = schedule.alpha_bar_at(t);
  const double a = std::sqrt(ab), s = std::sqrt(1.0 - ab);
  std::vector<T> out(z0.numel());
  auto x = z0.data();
  auto e = eps.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(a * x[i] + s * e[i]);
  return Tensor<T>(z0.shape(), std::move(out));
}

template <typename T>
Tensor<T> ddim_step(const Tensor<T>& x_t, const Tensor<T>& eps_hat, long t, long t_prev, const NoiseSchedule& schedule,
                    double eta, Rng* rng) {
  if (t < 0 || t_prev >= t) {
    throw ValueError("ddim_step needs t_prev < t and t >= 0, got t=" + std::to_string(t) +
                     ", t_prev=" + std::to_string(t_prev));
  }
  if (x_t.shape() != eps_hat.shape()) {
    throw ShapeError("ddim_step: x_t " + shape_str(x_t.shape()) + " vs eps " + shape_str(eps_hat.shape()));
  }
  if (eta < 0) throw ValueError("eta must be non-negative");
  if (eta > 0 && !rng) throw ValueError("ddim_step with eta > 0 needs a random generator");
  const double ab = schedule.alpha_bar_at(t);
  const double ab_prev = schedule.alpha_bar_at(t_prev);
  const double sigma = eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
  const double dir = std::sqrt(std::max(0.0, 1.0 - ab_prev - sigma * sigma));
  const double sa = std::sqrt(ab), s1 = std::sqrt(1.0 - ab), sp = std::sqrt(ab_prev);
  std::vector<T> out(x_t.numel());
  auto x = x_t.data();
  auto e = eps_hat.data();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0 = (x[i] - s1 * e[i]) / sa;
    double v = sp * x0 + dir * e[i];
    if (sigma > 0) v += sigma * rng->normal();
    out[i] = static_cast<T>(v);
  }
  return Tensor<T>(x_t.shape(), std::move(out));
}

template <typename T>
Tensor<T> cfg_combine(const Tensor<T>& eps_cond, const Tensor<T>& eps_uncond, double scale) {
  if (eps_cond.shape() != eps_uncond.shape()) {
    throw ShapeError("cfg_combine: " + shape_str(eps_cond.shape()) + " vs " + shape_str(eps_uncond.shape()));
  }
  std::vector<T> out(eps_cond.numel());
  auto c = eps_cond.data();
  auto u = eps_uncond.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(u[i] + scale * (c[i] - u[i]));
  return Tensor<T>(eps_cond.shape(), std::move(out));
}

std::vector<long> ddim_timesteps(std::size_t train_steps, std::size_t steps) {
  if (steps == 0 || steps > train_steps) {
    throw ValueError("ddim steps must lie in [1, " + std::to_string(train_steps) + "], got " + std::to_string(steps));
  }
  std::vector<long> ts;
  if (steps == 1) return {0};
  for (std::size_t i = steps; i-- > 0;) {
    const double v = static_cast<double>(i) * static_cast<double>(train_steps - 1) / static_cast<double>(steps - 1);
    ts.push_back(static_cast<long>(std::llround(v)));
  }
  return ts;
}

void SamplerConfig::validate(const NoiseSchedule& schedule) const {
  if (ddim_steps == 0 || ddim_steps > schedule.size()) throw ValueError("ddim_steps must lie in [1, T_train]");
  if (!(cfg_scale >= 0) || !std::isfinite(cfg_scale)) throw ValueError("cfg_scale must be finite and >= 0");
  if (!(eta >= 0) || !std::isfinite(eta)) throw ValueError("eta must be finite and >= 0");
}

std::vector<TrainExample> prepare_examples(const std::vector<VideoClip>& clips, const Vae<float>& vae,
                                           const Vocab& vocab, std::size_t max_tokens, const HfaConfig& hfa) {
  NoGradGuard no_grad;
  std::vector<TrainExample> out;
  for (const auto& clip : clips) {
    if (clip.masks.size() != clip.frames.size() || clip.frames.empty()) {
      throw ValueError("clip '" + clip.caption + "' needs one mask per frame");
    }
    clip.validate();
    TrainExample ex;
    ex.z0 = vae.encode(stack_frames(clip.frames));
    if (ex.z0.dim(2) != hfa.latent_size || ex.z0.dim(3) != hfa.latent_size) {
      throw ShapeError("clip latents " + shape_str(ex.z0.shape()) + " do not match HFA latent size " +
                       std::to_string(hfa.latent_size));
    }
    std::vector<Tensor<float>> feats;
    const std::size_t channels = hfa.scales.size() * Vae<float>::kLatentChannels;
    for (std::size_t t = 0; t < clip.frame_count(); ++t) {
      auto s = extract_subject(clip.frames[t], clip.masks[t]);
      if (t == 0) ex.subject_image = s.subject_image;
      ex.present.push_back(s.empty() ? 0 : 1);
      feats.push_back(s.empty() ? Tensor<float>::zeros({channels, hfa.latent_size, hfa.latent_size})
                                : hfa_features(vae, s.subject_image, hfa));
    }
    ex.hfa = stack_frames(feats);
    const auto& caption = clip.augmented_caption.empty() ? clip.caption : clip.augmented_caption;
    ex.text_ids = vocab.encode(caption, max_tokens);
    out.push_back(std::move(ex));
  }
  return out;
}

DenoiseBatch make_denoise_batch(const Denoiser<float>& net, const std::vector<const TrainExample*>& batch,
                                const NoiseSchedule& schedule, Rng& rng, const LossOptions& opts) {
  if (batch.empty()) throw ValueError("empty training batch");
  const Shape zs = batch[0]->z0.shape();
  const Shape fs = batch[0]->hfa.shape();
  const std::size_t b = batch.size(), t = zs[0];
  DenoiseBatch out;
  std::vector<Tensor<float>> noisy, eps_all, feats, images;
  std::vector<std::uint8_t> present;
  std::vector<std::vector<std::size_t>> ids;
  for (const auto* ex : batch) {
    if (ex->z0.shape() != zs || ex->hfa.shape() != fs) throw ShapeError("training clips must share shapes");
    const auto step = static_cast<long>(rng.below(schedule.size()));
    auto eps = Tensor<float>(zs, rng.normal_vector<float>(shape_numel(zs)));
    const bool edit = rng.uniform() < opts.edit_mode_p;
    const bool drop = rng.uniform() < opts.prompt_drop_p;
    out.timesteps.push_back(static_cast<double>(step));
    out.edit_mode.push_back(edit ? 1 : 0);
    out.dropped.push_back(drop ? 1 : 0);
    noisy.push_back(q_sample(ex->z0, step, eps, schedule));
    eps_all.push_back(eps);
    feats.push_back(ex->hfa);
    images.push_back(ex->subject_image);
    for (std::size_t f = 0; f < t; ++f) {
      const bool ref = !drop && (edit || f == 0);
      present.push_back(ref && ex->present[f] ? 1 : 0);
    }
    ids.push_back(drop ? null_prompt_ids() : ex->text_ids);
  }
  const std::size_t cz = zs[1], h = zs[2], w = zs[3];
  auto feat = reshape(stack_frames(feats), {b * t, fs[1], fs[2], fs[3]});
  auto z_s = reshape(net.hfa_fusion()(feat, present), {b, t, cz, h, w});
  out.z_in = concat<float>({stack_frames(noisy), z_s}, 2);
  out.eps = stack_frames(eps_all);

  out.cond.text = net.embed_text_batch(ids);
  auto tokens = net.image_tokens(stack_frames(images));
  bool any_drop = false;
  for (auto d : out.dropped) any_drop = any_drop || d;
  if (any_drop) {
    const std::size_t per = tokens.numel() / b;
    std::vector<float> gate(tokens.numel(), 1.0f);
    for (std::size_t i = 0; i < b; ++i) {
      if (out.dropped[i]) std::fill_n(gate.begin() + static_cast<std::ptrdiff_t>(i * per), per, 0.0f);
    }
    tokens = mul(tokens, Tensor<float>(tokens.shape(), std::move(gate)));
  }
  out.cond.image = tokens;
  return out;
}

Tensor<float> denoise_loss(const Denoiser<float>& net, const DenoiseBatch& batch) {
  return mse_loss(net.forward(batch.z_in, batch.timesteps, batch.cond), batch.eps);
}

TrainResult train_denoiser(Denoiser<float>& net, const std::vector<TrainExample>& examples,
                           const NoiseSchedule& schedule, const TrainOptions& opts,
                           const std::function<void(const TrainLogEntry&)>& on_log,
                           const std::function<void(std::size_t)>& on_step) {
  if (examples.empty()) throw ValueError("no training clips");
  if (opts.batch_size == 0) throw ValueError("batch size must be positive");
  TrainResult result;
  Adam<float> adam(net.params(), {.lr = opts.lr});
  Rng rng(opts.seed);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();
  const std::size_t bs = std::min(opts.batch_size, examples.size());
  for (std::size_t step = 0; step < opts.steps; ++step) {
    std::vector<const TrainExample*> batch;
    while (batch.size() < bs) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(&examples[order[cursor++]]);
    }
    auto inputs = make_denoise_batch(net, batch, schedule, rng, opts.loss);
    auto loss = denoise_loss(net, inputs);
    const double lv = loss.item();
    if (!std::isfinite(lv)) {
      throw NumericError("training loss became non-finite at step " + std::to_string(step) +
                         " (timesteps of the batch: " + std::to_string(inputs.timesteps.front()) + "...)");
    }
    loss.backward();
    adam.step();
    result.losses.push_back(lv);
    if (opts.log_every && (step % opts.log_every == 0 || step + 1 == opts.steps)) {
      TrainLogEntry entry{step, lv, net.alphas()};
      if (on_log) on_log(entry);
      result.log.push_back(std::move(entry));
    }
    if (on_step) on_step(step + 1);
  }
  if (!result.losses.empty()) {
    const std::size_t n = std::min(std::max<std::size_t>(opts.final_window, 1), result.losses.size());
    result.final_loss =
        std::accumulate(result.losses.end() - static_cast<std::ptrdiff_t>(n), result.losses.end(), 0.0) /
        static_cast<double>(n);
  }
  return result;
}

Tensor<float> sample_latents(const InferenceContext& ctx, const std::vector<SubjectPrompt>& references,
                             const Tensor<float>& subject_image, const std::string& caption,
                             const SamplerConfig& sampler) {
  sampler.validate(ctx.schedule);
  const auto& net = ctx.net;
  const std::size_t t = references.size();
  if (t == 0 || t > net.config().max_frames) {
    throw ShapeError("frame count " + std::to_string(t) + " outside [1, " + std::to_string(net.config().max_frames) +
                     "]");
  }
  if (subject_image.rank() != 3 || subject_image.dim(0) != 3) {
    throw ShapeError("subject image must be [3,H,W], got " + shape_str(subject_image.shape()));
  }
  NoGradGuard no_grad;
  const std::size_t cz = net.config().latent_channels, h = ctx.hfa.latent_size, w = ctx.hfa.latent_size;
  auto z_s = stack_frames(hfa_encode(references, ctx.vae, net.hfa_fusion(), ctx.hfa));
  if (z_s.shape() != Shape{t, cz, h, w}) throw ShapeError("HFA latents " + shape_str(z_s.shape()) + " mismatch");
  const auto zero_s = Tensor<float>::zeros(z_s.shape());

  const auto ids = ctx.vocab.encode(caption, net.config().max_tokens);
  Conditioning<float> cond{net.embed_text_batch({ids, null_prompt_ids()}),
                           concat<float>({net.image_tokens(reshape(subject_image, {1, 3, subject_image.dim(1),
                                                                                   subject_image.dim(2)})),
                                          net.null_image_tokens(1)},
                                         0)};
  Rng rng(sampler.seed);
  auto x = Tensor<float>({t, cz, h, w}, rng.normal_vector<float>(t * cz * h * w));
  const auto steps = ddim_timesteps(ctx.schedule.size(), sampler.ddim_steps);
  for (std::size_t k = 0; k < steps.size(); ++k) {
    const long step = steps[k];
    const long prev = k + 1 < steps.size() ? steps[k + 1] : -1;
    auto z_in = stack_frames<float>({concat<float>({x, z_s}, 1), concat<float>({x, zero_s}, 1)});
    auto eps = net.forward(z_in, {static_cast<double>(step), static_cast<double>(step)}, cond);
    const Shape one{t, cz, h, w};
    auto guided = cfg_combine(reshape(slice(eps, 0, 0, 1), one), reshape(slice(eps, 0, 1, 2), one), sampler.cfg_scale);
    x = ddim_step(x, guided, step, prev, ctx.schedule, sampler.eta, &rng);
  }
  return x;
}

namespace {

VideoClip decode_clip(const InferenceContext& ctx, const Tensor<float>& latents) {
  NoGradGuard no_grad;
  auto frames = ctx.vae.decode(latents);
  VideoClip clip;
  const std::size_t n = frames.dim(0), h = frames.dim(2), w = frames.dim(3);
  for (std::size_t i = 0; i < n; ++i) clip.frames.push_back(reshape(slice(frames, 0, i, i + 1), {3, h, w}).detach());
  return clip;
}

}  // namespace

VideoClip sample_video(const InferenceContext& ctx, const SubjectPrompt& subject, const std::string& caption,
                       std::size_t frames, const SamplerConfig& sampler) {
  if (subject.empty()) throw ValueError("subject mask is empty; pass a full-frame mask to use the whole image");
  std::vector<SubjectPrompt> refs{subject};
  const auto blank = Tensor<float>::zeros(subject.mask.shape());
  for (std::size_t i = 1; i < frames; ++i) refs.push_back({Tensor<float>::zeros(subject.subject_image.shape()), blank});
  auto clip = decode_clip(ctx, sample_latents(ctx, refs, subject.subject_image, caption, sampler));
  clip.masks.assign(clip.frames.size(), subject.mask);
  clip.caption = caption;
  return clip;
}

VideoClip edit_video(const InferenceContext& ctx, const VideoClip& source, const std::string& edit_caption,
                     const SamplerConfig& sampler) {
  if (source.masks.size() != source.frames.size()) throw ValueError("source clip needs one mask per frame");
  if (source.frame_count() > ctx.net.config().max_frames) {
    throw ShapeError("source has " + std::to_string(source.frame_count()) + " frames; the model handles at most " +
                     std::to_string(ctx.net.config().max_frames));
  }
  source.validate();
  std::vector<SubjectPrompt> refs;
  for (std::size_t i = 0; i < source.frame_count(); ++i) refs.push_back(extract_subject(source.frames[i], source.masks[i]));
  auto clip = decode_clip(ctx, sample_latents(ctx, refs, refs[0].subject_image, edit_caption, sampler));
  clip.masks = source.masks;
  clip.caption = edit_caption;
  clip.subject_label = source.subject_label;
  clip.fps = source.fps;
  return clip;
}

template Tensor<float> q_sample(const Tensor<float>&, long, const Tensor<float>&, const NoiseSchedule&);
template Tensor<double> q_sample(const Tensor<double>&, long, const Tensor<double>&, const NoiseSchedule&);
template Tensor<float> ddim_step(const Tensor<float>&, const Tensor<float>&, long, long, const NoiseSchedule&, double,
                                 Rng*);
template Tensor<double> ddim_step(const Tensor<double>&, const Tensor<double>&, long, long, const NoiseSchedule&,
                                  double, Rng*);
template Tensor<float> cfg_combine(const Tensor<float>&, const Tensor<float>&, double);
template Tensor<double> cfg_combine(const Tensor<double>&, const Tensor<double>&, double);

}  // namespace magdiff
