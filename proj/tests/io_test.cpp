#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "magdiff/image_io.hpp"
#include "magdiff/pipeline.hpp"

using namespace magdiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("magdiff_io_" + name);
  fs::remove_all(p);
  return p;
}

std::vector<char> bytes_of(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool same_clip(const VideoClip& a, const VideoClip& b) {
  if (a.caption != b.caption || a.subject_label != b.subject_label || a.augmented_caption != b.augmented_caption ||
      a.frame_count() != b.frame_count())
    return false;
  for (std::size_t t = 0; t < a.frame_count(); ++t) {
    if (a.frames[t].data().size() != b.frames[t].data().size()) return false;
    for (std::size_t i = 0; i < a.frames[t].numel(); ++i)
      if (a.frames[t].at(i) != b.frames[t].at(i)) return false;
    for (std::size_t i = 0; i < a.masks[t].numel(); ++i)
      if (a.masks[t].at(i) != b.masks[t].at(i)) return false;
  }
  return true;
}

PrepareOptions small_options(std::size_t n, std::uint64_t seed) {
  RunConfig rc;
  rc.clips = n;
  rc.seed = seed;
  return prepare_options(rc);
}

}  // namespace

TEST(ImageIo, PpmRoundTripIsExactOnByteGrid) {
  Rng rng(1);
  std::vector<float> v(3 * 5 * 7);
  for (auto& x : v) x = static_cast<float>(rng.below(256)) / 255.0f;
  Tensor<float> img({3, 5, 7}, v);
  const auto p = scratch("a.ppm");
  write_ppm(p, img);
  const auto back = read_ppm(p);
  ASSERT_EQ(back.shape(), img.shape());
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_EQ(back.at(i), v[i]);
  // interleaved RGB after a 3-line header
  const auto raw = bytes_of(p);
  const std::string header = "P6\n7 5\n255\n";
  ASSERT_EQ(raw.size(), header.size() + v.size());
  EXPECT_EQ(std::string(raw.begin(), raw.begin() + static_cast<long>(header.size())), header);
  EXPECT_EQ(static_cast<unsigned char>(raw[header.size() + 1]), std::lround(v[35] * 255));
}

TEST(ImageIo, MaskRoundTripAndThreshold) {
  Tensor<float> m({1, 2, 3}, {1, 0, 1, 0, 0, 1});
  const auto p = scratch("m.pgm");
  write_pgm_mask(p, m);
  const auto back = read_pgm_mask(p);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(back.at(i), m.at(i));
  std::ofstream(p, std::ios::binary) << "P5\n# comment\n2 1\n255\n" << static_cast<char>(127) << static_cast<char>(128);
  const auto t = read_pgm_mask(p);
  EXPECT_EQ(t.at(0), 0.0f);
  EXPECT_EQ(t.at(1), 1.0f);
}

TEST(ImageIo, Errors) {
  EXPECT_THROW(read_ppm(scratch("missing.ppm")), IoError);
  const auto p = scratch("bad.ppm");
  std::ofstream(p, std::ios::binary) << "P3\n1 1\n255\n0 0 0\n";
  EXPECT_THROW(read_ppm(p), IoError);
  std::ofstream(p, std::ios::binary) << "P6\n4 4\n255\n" << std::string(10, 'x');
  EXPECT_THROW(read_ppm(p), IoError);
  EXPECT_THROW(read_pgm_mask(p), IoError);
  EXPECT_THROW(write_ppm(p, Tensor<float>::zeros({1, 2, 2})), ShapeError);
}

TEST(ImageIo, ContactSheetLayout) {
  Rng rng(2);
  std::vector<Tensor<float>> frames;
  for (int t = 0; t < 3; ++t) frames.emplace_back(Shape{3, 2, 4}, rng.uniform_vector<float>(24, 0, 1));
  const auto sheet = contact_sheet(frames);
  ASSERT_EQ(sheet.shape(), (Shape{3, 2, 12}));
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t x = 0; x < 4; ++x)
          EXPECT_EQ(sheet.at((c * 2 + y) * 12 + t * 4 + x), frames[t].at((c * 2 + y) * 4 + x));
  EXPECT_THROW(contact_sheet({}), ValueError);
}

TEST(Corpus, SeededAndIndependentOfCount) {
  const auto a = prepare_synthetic_corpus(small_options(5, 7));
  const auto b = prepare_synthetic_corpus(small_options(5, 7));
  const auto prefix = prepare_synthetic_corpus(small_options(3, 7));
  const auto other = prepare_synthetic_corpus(small_options(5, 8));
  ASSERT_EQ(a.clips.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_TRUE(same_clip(a.clips[i], b.clips[i]));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(same_clip(a.clips[i], prefix.clips[i]));
  bool any_diff = false;
  for (std::size_t i = 0; i < 5; ++i) any_diff = any_diff || !same_clip(a.clips[i], other.clips[i]);
  EXPECT_TRUE(any_diff);
  EXPECT_EQ(a.names[4], "clip_0004");
}

TEST(Corpus, DefaultFiltersKeepEverySyntheticClip) {
  const auto c = prepare_synthetic_corpus(small_options(200, 1));
  EXPECT_EQ(c.clips.size(), 200u);
  EXPECT_TRUE(c.rejected.empty());
  // retention is a construction property: area ratios of every sprite sit inside [5%, 60%]
  for (const auto& clip : c.clips) {
    const double r = mean_area_ratio(clip);
    EXPECT_GE(r, 0.05);
    EXPECT_LE(r, 0.60);
  }
}

TEST(Corpus, AlgorithmAReturnsTheTrueLabel) {
  for (const auto& clip : prepare_synthetic_corpus(small_options(40, 2)).clips) {
    // caption "a <color> <shape> ..." names the truth label in words 2-3
    const auto words = tokenize_words(clip.caption);
    EXPECT_EQ(clip.subject_label, words[1] + " " + words[2]);
    EXPECT_EQ(clip.augmented_caption, clip.caption + ", subject: " + clip.subject_label);
  }
}

TEST(Corpus, StrictFiltersRejectWithReasons) {
  auto o = small_options(4, 3);
  o.curation.min_short_side = 512;
  const auto c = prepare_synthetic_corpus(o);
  EXPECT_TRUE(c.clips.empty());
  ASSERT_EQ(c.rejected.size(), 4u);
  EXPECT_EQ(c.rejected[2].index, 2u);
  EXPECT_EQ(c.rejected[2].reason, "short-side");
}

TEST(Corpus, WriteAndReadBack) {
  const auto dir = scratch("corpus");
  const auto c = prepare_synthetic_corpus(small_options(3, 4));
  write_corpus(dir, c);
  const auto back = read_corpus(dir);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_TRUE(same_clip(back[i], c.clips[i]));
  const auto manifest = nlohmann::json::parse(bytes_of(dir / "manifest.json"));
  EXPECT_EQ(manifest["clips"].size(), 3u);
  EXPECT_EQ(manifest["curation"], c.curation.to_json());
  EXPECT_TRUE(fs::exists(dir / "stats.json"));
  const auto vocab = Vocab::load(dir / "vocab.txt");
  for (const auto& clip : c.clips)
    for (const auto& w : tokenize_words(clip.augmented_caption)) EXPECT_NE(vocab.id(w), Vocab::kUnk) << w;
  fs::remove_all(dir);
}

TEST(Corpus, EmptyCorpusIsValid) {
  const auto dir = scratch("empty");
  write_corpus(dir, prepare_synthetic_corpus(small_options(0, 0)));
  EXPECT_TRUE(read_corpus(dir).empty());
  EXPECT_FALSE(fs::exists(dir / "stats.json"));
  fs::remove_all(dir);
}

TEST(Pipeline, SeedStreamsDiffer) {
  std::set<std::uint64_t> seen;
  for (auto s : {SeedStream::kData, SeedStream::kVaeInit, SeedStream::kVaeTrain, SeedStream::kDenoiserInit,
                 SeedStream::kTrain, SeedStream::kSample})
    seen.insert(derive_seed(5, s));
  EXPECT_EQ(seen.size(), 6u);
  EXPECT_EQ(derive_seed(5, SeedStream::kTrain), derive_seed(5, SeedStream::kTrain));
  EXPECT_NE(derive_seed(5, SeedStream::kTrain), derive_seed(6, SeedStream::kTrain));
}

TEST(Pipeline, ConfigMapping) {
  RunConfig rc;
  rc.apa_mode = "fixed:0.3,0.7";
  rc.hfa_scales = {40, 32};
  rc.frames = 6;
  const auto dc = denoiser_config(rc, 30);
  EXPECT_EQ(dc.vocab_size, 30u);
  EXPECT_EQ(dc.hfa_channels, 8u);
  EXPECT_EQ(dc.max_frames, 6u);
  EXPECT_EQ(dc.apa.mode, ApaMode::kFixed);
  const auto to = train_options(rc);
  EXPECT_EQ(to.lr, 5e-5);
  EXPECT_EQ(to.loss.prompt_drop_p, 0.15);
  EXPECT_EQ(to.batch_size, 64u);
  const auto sc = sampler_config(rc);
  EXPECT_EQ(sc.cfg_scale, 7.5);
  EXPECT_EQ(sc.ddim_steps, 50u);
  EXPECT_EQ(hfa_config(rc).latent_size, 8u);
  EXPECT_EQ(prepare_options(rc).base.frames, 6u);
}

TEST(Pipeline, InitModelAppliesFreezePolicyAndFreezesVae) {
  RunConfig rc;
  rc.base_channels = 8;
  rc.mid_channels = 16;
  rc.freeze_policy = "default";
  auto m = init_model(rc, std::make_unique<Vae<float>>(1), Vocab::build({"a red square"}));
  EXPECT_EQ(m.vae->params().trainable_elements(), 0u);
  EXPECT_LT(m.net->params().trainable_elements(), m.net->params().total_elements());
  rc.freeze_policy = "train-all";
  auto all = init_model(rc, std::make_unique<Vae<float>>(1), Vocab::build({"a red square"}));
  EXPECT_EQ(all.net->params().trainable_elements(), all.net->params().total_elements());
  EXPECT_EQ(all.net->params().checksum(), m.net->params().checksum());
}
