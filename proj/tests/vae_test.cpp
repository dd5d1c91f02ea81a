#include <gtest/gtest.h>

#include "magdiff/data.hpp"
#include "magdiff/vae.hpp"

namespace magdiff {
namespace {

std::vector<Tensor<float>> sprite_frames(std::size_t clips, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor<float>> frames;
  for (std::size_t i = 0; i < clips; ++i) {
    auto c = gen_synthetic_clip(rng, random_sprite_spec(rng, SpriteSpec{}));
    frames.insert(frames.end(), c.frames.begin(), c.frames.end());
  }
  return frames;
}

TEST(Vae, ShapesRoundTrip) {
  Vae<float> vae(1);
  Rng rng(2);
  Tensor<float> x({3, 32, 32}, rng.uniform_vector<float>(3 * 32 * 32, 0, 1));
  auto z = vae.encode(x);
  EXPECT_EQ(z.shape(), (Shape{4, 8, 8}));
  auto y = vae.decode(z);
  EXPECT_EQ(y.shape(), x.shape());
  Tensor<float> xb({2, 3, 16, 24}, rng.uniform_vector<float>(2 * 3 * 16 * 24, 0, 1));
  EXPECT_EQ(vae.decode(vae.encode(xb)).shape(), xb.shape());
}

TEST(Vae, RejectsIndivisibleInput) {
  Vae<float> vae(1);
  EXPECT_THROW(vae.encode(Tensor<float>::zeros({3, 30, 32})), ShapeError);
}

TEST(Vae, EncodeIsDeterministic) {
  Vae<float> vae(3);
  auto frames = sprite_frames(1, 4);
  auto a = vae.encode(frames[0]), b = vae.encode(frames[0]);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
}

TEST(Vae, ZeroLatentDecodesToFiniteConstantImage) {
  Vae<float> vae(5);
  auto y = vae.decode(Tensor<float>::zeros({4, 8, 8}));
  for (auto v : y.data()) {
    EXPECT_TRUE(std::isfinite(v));
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(Vae, ZeroStepsLeavesParamsUnchangedAndFrozen) {
  Vae<float> vae(6);
  const auto before = vae.params().checksum();
  auto r = train_vae(vae, sprite_frames(1, 7), {.steps = 0});
  EXPECT_EQ(vae.params().checksum(), before);
  EXPECT_EQ(vae.params().trainable_elements(), 0u);
  EXPECT_EQ(r.initial_mse, r.final_mse);
  EXPECT_THROW(train_vae(vae, {}, {}), ValueError);
}

TEST(Vae, ShortTrainingReducesLossAndFreezes) {
  Vae<float> vae(8);
  auto frames = sprite_frames(2, 9);
  auto r = train_vae(vae, frames, {.steps = 60, .lr = 2e-3, .batch_size = 8, .seed = 1});
  ASSERT_EQ(r.losses.size(), 60u);
  EXPECT_LT(r.final_mse, r.initial_mse);
  EXPECT_EQ(vae.params().trainable_elements(), 0u);
  for (const auto& e : vae.params().entries()) EXPECT_FALSE(e.tensor.requires_grad()) << e.name;
}

TEST(Vae, LatentScaleDoesNotChangeReconstruction) {
  Vae<float> vae(10);
  auto frames = sprite_frames(1, 11);
  const double a = reconstruction_mse(vae, frames);
  vae.set_latent_scale(3.0f);
  EXPECT_NEAR(reconstruction_mse(vae, frames), a, 1e-6);
  EXPECT_THROW(vae.set_latent_scale(0.0f), NumericError);
}

TEST(Vae, ParameterNamesArePrefixed) {
  Vae<float> vae(0);
  for (const auto& e : vae.params().entries()) EXPECT_EQ(e.name.rfind("vae.", 0), 0u) << e.name;
}

}  // namespace
}  // namespace magdiff
