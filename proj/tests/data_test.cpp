#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "curation_cases.hpp"
#include "magdiff/curation.hpp"
#include "magdiff/data.hpp"

namespace magdiff {
namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("magdiff_data_test_" + name);
  fs::remove_all(p);
  return p;
}

SpriteSpec spec_with(Motion m, SpriteShape s = SpriteShape::kSquare, std::size_t color = 0) {
  SpriteSpec spec;
  spec.motion = m;
  spec.shape = s;
  spec.color = color;
  return spec;
}

double mask_centroid_x(const Tensor<float>& mask) {
  const std::size_t w = mask.dim(2);
  double sx = 0, n = 0;
  for (std::size_t i = 0; i < mask.numel(); ++i) {
    if (mask.at(i) > 0.5f) {
      sx += static_cast<double>(i % w);
      n += 1;
    }
  }
  return sx / n;
}

TEST(SyntheticClip, StaticMotionGivesIdenticalFrames) {
  Rng rng(3);
  auto clip = gen_synthetic_clip(rng, spec_with(Motion::kStatic));
  ASSERT_EQ(clip.frame_count(), 8u);
  for (std::size_t t = 1; t < clip.frame_count(); ++t) {
    EXPECT_EQ(clip.frames[t].data()[0], clip.frames[0].data()[0]);
    EXPECT_TRUE(std::equal(clip.frames[t].data().begin(), clip.frames[t].data().end(), clip.frames[0].data().begin()));
    EXPECT_TRUE(std::equal(clip.masks[t].data().begin(), clip.masks[t].data().end(), clip.masks[0].data().begin()));
  }
  EXPECT_EQ(clip.caption, "a red square stays still");
}

TEST(SyntheticClip, AreaRatioEqualsFootprint) {
  Rng rng(4);
  auto spec = spec_with(Motion::kDown, SpriteShape::kCircle, 2);
  auto clip = gen_synthetic_clip(rng, spec);
  std::size_t on = 0;
  for (auto b : sprite_footprint(spec, 0, 0)) on += b;
  EXPECT_DOUBLE_EQ(mean_area_ratio(clip), static_cast<double>(on) / (32.0 * 32.0));
}

TEST(SyntheticClip, RightwardCentroidStrictlyIncreases) {
  Rng rng(5);
  auto clip = gen_synthetic_clip(rng, spec_with(Motion::kRight));
  EXPECT_EQ(clip.caption, "a red square moves right");
  EXPECT_EQ(clip.subject_label, "red square");
  for (std::size_t t = 1; t < clip.frame_count(); ++t) {
    EXPECT_GT(mask_centroid_x(clip.masks[t]), mask_centroid_x(clip.masks[t - 1]));
  }
}

TEST(SyntheticClip, SpriteLargerThanFrameThrows) {
  Rng rng(0);
  SpriteSpec spec;
  spec.sprite_size = 40;
  EXPECT_THROW(gen_synthetic_clip(rng, spec), ValueError);
}

TEST(SyntheticClip, SameSeedSameClip) {
  Rng a(11), b(11);
  auto spec = random_sprite_spec(a, SpriteSpec{});
  auto spec_b = random_sprite_spec(b, SpriteSpec{});
  auto ca = gen_synthetic_clip(a, spec), cb = gen_synthetic_clip(b, spec_b);
  EXPECT_EQ(ca.caption, cb.caption);
  for (std::size_t t = 0; t < ca.frame_count(); ++t) {
    EXPECT_TRUE(std::equal(ca.frames[t].data().begin(), ca.frames[t].data().end(), cb.frames[t].data().begin()));
  }
}

TEST(SyntheticClip, BackgroundStaysFarFromSpriteColors) {
  Rng rng(21);
  for (int i = 0; i < 30; ++i) {
    auto clip = gen_synthetic_clip(rng, random_sprite_spec(rng, SpriteSpec{}));
    const auto bg = background_color(clip.frames[0], clip.masks[0]);
    const std::size_t hw = 32 * 32;
    for (std::size_t p = 0; p < hw; ++p) {
      float diff = 0;
      for (std::size_t c = 0; c < 3; ++c) diff = std::max(diff, std::abs(clip.frames[0].at(c * hw + p) - bg[c]));
      if (clip.masks[0].at(p) > 0.5f) {
        EXPECT_GT(diff, 0.1f);
      } else {
        EXPECT_LE(diff, 0.1f);
      }
    }
  }
}

TEST(SyntheticClip, EverySyntheticClipPassesScaledFilters) {
  Rng rng(8);
  CurationConfig cfg;
  cfg.min_short_side = 32;
  for (int i = 0; i < 100; ++i) {
    auto clip = gen_synthetic_clip(rng, random_sprite_spec(rng, SpriteSpec{}));
    auto d = filter_clip(clip, cfg);
    EXPECT_TRUE(d.keep) << d.reason << " ratio " << mean_area_ratio(clip);
  }
}

TEST(ClipIo, RoundTripIsExact) {
  Rng rng(9);
  auto clip = gen_synthetic_clip(rng, random_sprite_spec(rng, SpriteSpec{}));
  clip.augmented_caption = augment_caption(clip.caption, clip.subject_label);
  auto dir = temp_dir("roundtrip");
  write_clip(dir, clip);
  auto back = read_clip(dir);
  EXPECT_EQ(back.caption, clip.caption);
  EXPECT_EQ(back.subject_label, clip.subject_label);
  EXPECT_EQ(back.augmented_caption, clip.augmented_caption);
  EXPECT_EQ(back.fps, clip.fps);
  ASSERT_EQ(back.frame_count(), clip.frame_count());
  for (std::size_t t = 0; t < clip.frame_count(); ++t) {
    for (std::size_t i = 0; i < clip.frames[t].numel(); ++i) ASSERT_EQ(back.frames[t].at(i), clip.frames[t].at(i));
    for (std::size_t i = 0; i < clip.masks[t].numel(); ++i) ASSERT_EQ(back.masks[t].at(i), clip.masks[t].at(i));
  }
  // Writing the read-back clip reproduces the same bytes.
  auto dir2 = temp_dir("roundtrip2");
  write_clip(dir2, back);
  for (const char* f : {"meta.json", "frames.bin", "masks.bin"}) {
    std::ifstream a(dir / f, std::ios::binary), b(dir2 / f, std::ios::binary);
    std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    EXPECT_EQ(sa, sb) << f;
  }
  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST(ClipIo, MissingMasksNamesTheFile) {
  Rng rng(10);
  auto dir = temp_dir("missing");
  write_clip(dir, gen_synthetic_clip(rng, SpriteSpec{}));
  fs::remove(dir / "masks.bin");
  try {
    read_clip(dir);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("masks.bin"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(ClipIo, FrameLayoutIsInterleavedRgb) {
  VideoClip clip;
  clip.frames.emplace_back(Shape{3, 1, 2}, std::vector<float>{1.0f, 0.0f, 0.0f, 1.0f, 0.0f, 0.0f});
  clip.masks.emplace_back(Shape{1, 1, 2}, std::vector<float>{1.0f, 0.0f});
  auto dir = temp_dir("layout");
  write_clip(dir, clip);
  std::ifstream in(dir / "frames.bin", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  ASSERT_EQ(bytes.size(), 6u);
  const std::string expect{'\xff', '\x00', '\x00', '\x00', '\xff', '\x00'};
  EXPECT_EQ(bytes, expect);
  std::ifstream min(dir / "masks.bin", std::ios::binary);
  std::string mbytes((std::istreambuf_iterator<char>(min)), {});
  EXPECT_EQ(mbytes, std::string({'\xff', '\x00'}));
  fs::remove_all(dir);
}

TEST(CenterCrop, NativeSizeIsNoOpAndSmallerCropsCenter) {
  Rng rng(12);
  auto clip = gen_synthetic_clip(rng, SpriteSpec{});
  auto same = center_crop(clip, 32);
  EXPECT_TRUE(std::equal(same.frames[0].data().begin(), same.frames[0].data().end(), clip.frames[0].data().begin()));
  auto small = center_crop(clip, 16);
  ASSERT_EQ(small.frames[0].shape(), (Shape{3, 16, 16}));
  EXPECT_EQ(small.frames[0].at(0), clip.frames[0].at(8 * 32 + 8));
  EXPECT_THROW(center_crop(clip, 33), ShapeError);
}

TEST(Similarity, BasicProperties) {
  EXPECT_EQ(text_similarity("cat", "cat"), 1.0);
  EXPECT_EQ(text_similarity("Cat", "cAT"), 1.0);
  EXPECT_EQ(text_similarity("cat", "xyz"), 0.0);
  EXPECT_EQ(text_similarity("", ""), 1.0);
  EXPECT_EQ(text_similarity("", "cat"), 0.0);
  EXPECT_EQ(text_similarity("dog", "doggo"), text_similarity("doggo", "dog"));
}

TEST(Similarity, MatchesHandEnumeratedBigrams) {
  // dog: {do, og}; doggo: {do, og, gg, go}; shared 2, norms sqrt(2), sqrt(4).
  EXPECT_NEAR(text_similarity("dog", "doggo"), 2.0 / std::sqrt(8.0), 1e-15);
  // banana: {ba:1, an:2, na:2}; bandana: {ba, an:2, nd, da, na}.
  EXPECT_NEAR(text_similarity("banana", "bandana"), (1 + 4 + 2) / std::sqrt(9.0 * 8.0), 1e-15);
  Rng rng(13);
  const std::string alphabet = "abcde";
  for (int i = 0; i < 200; ++i) {
    std::string a, b;
    for (std::size_t k = 0, n = 1 + rng.below(6); k < n; ++k) a += alphabet[rng.below(5)];
    for (std::size_t k = 0, n = 1 + rng.below(6); k < n; ++k) b += alphabet[rng.below(5)];
    EXPECT_NEAR(text_similarity(a, b), testing::oracle_similarity(a, b), 1e-12) << a << " / " << b;
  }
}

class CuratedCaseTest : public ::testing::TestWithParam<std::size_t> {};

TEST_P(CuratedCaseTest, Passes) {
  const auto cases = testing::curated_cases();
  const auto& c = cases.at(GetParam());
  EXPECT_EQ(c.run(), "") << c.name;
}

INSTANTIATE_TEST_SUITE_P(Curation, CuratedCaseTest, ::testing::Range<std::size_t>(0, testing::curated_cases().size()));

TEST(Curation, AtLeastTwelveCuratedCases) { EXPECT_GE(testing::curated_cases().size(), 12u); }

TEST(Curation, SelectLabelIsDeterministic) {
  const std::vector<std::string> w{"square", "circle"}, s{"triangle", "circle"};
  EXPECT_EQ(select_subject_label("blob", w, s, 0.8), select_subject_label("blob", w, s, 0.8));
  EXPECT_THROW(select_subject_label("x", {}, s, 0.8), ValueError);
}

TEST(Curation, ExtractNounsFollowsCaptionOrder) {
  const std::set<std::string> lex{"square", "red", "circle"};
  EXPECT_EQ(extract_nouns("A red Square moves, red!", lex), (std::vector<std::string>{"red", "square"}));
  EXPECT_TRUE(extract_nouns("nothing here", lex).empty());
}

TEST(Curation, AugmentCaption) {
  EXPECT_EQ(augment_caption("a dog runs", "dog"), "a dog runs, subject: dog");
  const auto once = augment_caption("a dog runs", "dog");
  EXPECT_EQ(augment_caption(once, "dog"), once);
  EXPECT_EQ(augment_caption("a dog runs", ""), "a dog runs");
}

TEST(Curation, FilterDecisionsAreOrderIndependent) {
  Rng rng(14);
  CurationConfig cfg;
  cfg.min_short_side = 32;
  cfg.max_area_ratio = 0.09;
  std::vector<VideoClip> clips;
  for (int i = 0; i < 12; ++i) clips.push_back(gen_synthetic_clip(rng, random_sprite_spec(rng, SpriteSpec{})));
  std::vector<bool> forward, backward(clips.size());
  for (const auto& c : clips) forward.push_back(filter_clip(c, cfg).keep);
  for (std::size_t i = clips.size(); i-- > 0;) backward[i] = filter_clip(clips[i], cfg).keep;
  EXPECT_EQ(forward, backward);
}

TEST(Curation, ConfigJsonRoundTrip) {
  CurationConfig cfg;
  cfg.subject_aware = {"square", "circle"};
  cfg.theta = 0.65;
  auto back = CurationConfig::from_json(cfg.to_json());
  EXPECT_EQ(back.to_json(), cfg.to_json());
  auto bad = cfg.to_json();
  bad["theta"] = 1.5;
  EXPECT_THROW(CurationConfig::from_json(bad), ValueError);
}

TEST(DatasetStats, SingleClipDuration) {
  Rng rng(15);
  auto s = dataset_stats({gen_synthetic_clip(rng, SpriteSpec{})});
  ASSERT_EQ(s.durations.size(), 1u);
  EXPECT_EQ(s.durations.begin()->first, "1.00");
}

TEST(DatasetStats, CaptionLengthPointMass) {
  Rng rng(16);
  std::vector<VideoClip> clips;
  for (int i = 0; i < 5; ++i) {
    auto c = gen_synthetic_clip(rng, spec_with(Motion::kLeft));
    c.augmented_caption = "a b c d";
    clips.push_back(c);
  }
  auto s = dataset_stats(clips);
  ASSERT_EQ(s.caption_tokens.size(), 1u);
  EXPECT_EQ(s.caption_tokens.begin()->first, 4u);
}

TEST(DatasetStats, HistogramsConserveCount) {
  Rng rng(17);
  std::vector<VideoClip> clips;
  for (int i = 0; i < 100; ++i) clips.push_back(gen_synthetic_clip(rng, random_sprite_spec(rng, SpriteSpec{})));
  auto s = dataset_stats(clips);
  auto total = [](const auto& m) {
    std::size_t n = 0;
    for (const auto& kv : m) n += kv.second;
    return n;
  };
  EXPECT_EQ(total(s.caption_tokens), 100u);
  EXPECT_EQ(total(s.categories), 100u);
  EXPECT_EQ(total(s.durations), 100u);
  EXPECT_EQ(total(s.area_ratios), 100u);
  EXPECT_EQ(s.to_json()["clips"], 100);
  EXPECT_THROW(dataset_stats({}), ValueError);
}

}  // namespace
}  // namespace magdiff
