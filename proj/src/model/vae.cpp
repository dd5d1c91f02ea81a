#include "magdiff/vae.hpp"

#include <cmath>
#include <functional>

namespace magdiff {

template <typename T>
Vae<T>::Vae(std::uint64_t seed) {
  Rng rng(seed);
  const std::vector<std::size_t> k3{3, 3}, k1{1, 1}, s2{2, 2}, p1{1, 1};
  enc0_ = make_conv(params_, "vae.enc.conv0", 32, 3, k3, rng, {}, p1);
  enc1_ = make_conv(params_, "vae.enc.down1", 32, 32, k3, rng, s2, p1);
  enc2_ = make_conv(params_, "vae.enc.down2", 64, 32, k3, rng, s2, p1);
  enc_out_ = make_conv(params_, "vae.enc.out", kLatentChannels, 64, k1, rng, {}, {}, Init::kFanIn);
  dec_in_ = make_conv(params_, "vae.dec.in", 64, kLatentChannels, k3, rng, {}, p1);
  dec1_ = make_conv(params_, "vae.dec.up1", 32, 64, k3, rng, {}, p1);
  dec2_ = make_conv(params_, "vae.dec.up2", 32, 32, k3, rng, {}, p1);
  dec_out_ = make_conv(params_, "vae.dec.out", 3, 32, k3, rng, {}, p1, Init::kFanIn);
  params_.add("vae.latent_scale", Tensor<T>::full({1}, T(1)), false);
}

template <typename T>
void Vae<T>::set_latent_scale(T s) {
  if (!(s > T(0)) || !std::isfinite(s)) throw NumericError("latent scale must be finite and positive");
  Tensor<T>(params_.at("vae.latent_scale")).mutable_data()[0] = s;
}

template <typename T>
Tensor<T> Vae<T>::encode_unscaled(const Tensor<T>& x) const {
  if (x.rank() != 4 || x.dim(1) != 3) throw ShapeError("vae encode expects [N,3,H,W], got " + shape_str(x.shape()));
  if (x.dim(2) % kFactor != 0 || x.dim(3) % kFactor != 0) {
    throw ShapeError("vae encode: H and W must be divisible by 4, got " + shape_str(x.shape()));
  }
  auto h = silu(enc0_(x));
  h = silu(enc1_(h));
  h = silu(enc2_(h));
  return enc_out_(h);
}

template <typename T>
Tensor<T> Vae<T>::encode(const Tensor<T>& frames) const {
  if (frames.rank() == 3) {
    auto z = encode(reshape(frames, {1, frames.dim(0), frames.dim(1), frames.dim(2)}));
    return reshape(z, {z.dim(1), z.dim(2), z.dim(3)});
  }
  return mul(encode_unscaled(frames), params_.at("vae.latent_scale"));
}

template <typename T>
Tensor<T> Vae<T>::decode_raw(const Tensor<T>& latents) const {
  if (latents.rank() == 3) {
    auto x = decode_raw(reshape(latents, {1, latents.dim(0), latents.dim(1), latents.dim(2)}));
    return reshape(x, {x.dim(1), x.dim(2), x.dim(3)});
  }
  if (latents.rank() != 4 || latents.dim(1) != kLatentChannels) {
    throw ShapeError("vae decode expects [N,4,h,w], got " + shape_str(latents.shape()));
  }
  const T inv = T(1) / latent_scale();
  auto h = silu(dec_in_(scale(latents, inv)));
  h = resample2d(h, h.dim(2) * 2, h.dim(3) * 2, ResampleMode::kNearest);
  h = silu(dec1_(h));
  h = resample2d(h, h.dim(2) * 2, h.dim(3) * 2, ResampleMode::kNearest);
  h = silu(dec2_(h));
  return dec_out_(h);
}

template <typename T>
Tensor<T> Vae<T>::decode(const Tensor<T>& latents) const {
  return clamp(decode_raw(latents), T(0), T(1));
}

template <typename T>
Tensor<T> stack_frames(const std::vector<Tensor<T>>& frames) {
  if (frames.empty()) throw ShapeError("stack_frames: no frames");
  const Shape s = frames[0].shape();
  std::vector<T> data;
  data.reserve(frames.size() * frames[0].numel());
  for (const auto& f : frames) {
    if (f.shape() != s) throw ShapeError("stack_frames: mixed frame shapes");
    data.insert(data.end(), f.data().begin(), f.data().end());
  }
  Shape out{frames.size()};
  out.insert(out.end(), s.begin(), s.end());
  return Tensor<T>(out, std::move(data));
}

double reconstruction_mse(const Vae<float>& vae, const std::vector<Tensor<float>>& frames) {
  NoGradGuard no_grad;
  double total = 0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < frames.size(); i += 32) {
    std::vector<Tensor<float>> chunk(frames.begin() + static_cast<std::ptrdiff_t>(i),
                                     frames.begin() + static_cast<std::ptrdiff_t>(std::min(frames.size(), i + 32)));
    auto x = stack_frames(chunk);
    auto y = vae.decode(vae.encode(x));
    for (std::size_t j = 0; j < x.numel(); ++j) {
      const double d = static_cast<double>(y.at(j)) - static_cast<double>(x.at(j));
      total += d * d;
    }
    count += x.numel();
  }
  return total / static_cast<double>(count);
}

VaeTrainResult train_vae(Vae<float>& vae, const std::vector<Tensor<float>>& frames, const VaeTrainOptions& opts,
                         const std::function<void(std::size_t, double)>& log) {
  if (frames.empty()) throw ValueError("train_vae: empty dataset");
  VaeTrainResult result;
  result.initial_mse = reconstruction_mse(vae, frames);

  if (opts.steps == 0) {
    vae.freeze();
    result.final_mse = result.initial_mse;
    return result;
  }
  auto& params = vae.params();
  for (const auto& e : params.entries()) {
    if (e.name != "vae.latent_scale") params.set_trainable(e.name, true);
  }
  vae.set_latent_scale(1.0f);
  Adam<float> adam(params, {.lr = opts.lr});
  Rng rng(opts.seed);
  std::vector<std::size_t> order(frames.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::size_t cursor = order.size();
  const std::size_t batch = std::min(opts.batch_size, frames.size());
  for (std::size_t step = 0; step < opts.steps; ++step) {
    std::vector<Tensor<float>> picked;
    while (picked.size() < batch) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      picked.push_back(frames[order[cursor++]]);
    }
    auto x = stack_frames(picked);
    auto loss = mse_loss(vae.decode_raw(vae.encode(x)), x);
    const double lv = loss.item();
    if (!std::isfinite(lv)) throw NumericError("VAE loss became non-finite at step " + std::to_string(step));
    loss.backward();
    adam.step();
    result.losses.push_back(lv);
    if (log && opts.log_every && (step % opts.log_every == 0 || step + 1 == opts.steps)) log(step, lv);
  }

  vae.freeze();
  {
    // Rescale latents toward unit variance; decode divides the same factor
    // back out, so reconstructions are unchanged.
    NoGradGuard no_grad;
    double s = 0, s2 = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < frames.size(); i += 32) {
      std::vector<Tensor<float>> chunk(frames.begin() + static_cast<std::ptrdiff_t>(i),
                                       frames.begin() + static_cast<std::ptrdiff_t>(std::min(frames.size(), i + 32)));
      auto z = vae.encode(stack_frames(chunk));
      for (auto v : z.data()) {
        s += v;
        s2 += static_cast<double>(v) * v;
      }
      n += z.numel();
    }
    const double mu = s / static_cast<double>(n);
    const double var = s2 / static_cast<double>(n) - mu * mu;
    if (var > 1e-12) vae.set_latent_scale(static_cast<float>(1.0 / std::sqrt(var)));
  }
  result.final_mse = reconstruction_mse(vae, frames);
  return result;
}

template class Vae<float>;
template class Vae<double>;
template Tensor<float> stack_frames(const std::vector<Tensor<float>>&);
template Tensor<double> stack_frames(const std::vector<Tensor<double>>&);

}  // namespace magdiff
