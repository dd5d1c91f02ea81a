#pragma once

// Curated Algorithm-A and filter cases shared by the unit suite and the
// acceptance runner. Each case returns an empty string on success or a
// description of the mismatch.

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "magdiff/curation.hpp"

namespace magdiff::testing {

struct CuratedCase {
  std::string name;
  std::function<std::string()> run;
};

// Independent bigram cosine used to derive expected labels.
inline double oracle_similarity(std::string a, std::string b) {
  for (auto& c : a) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto& c : b) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (a == b) return 1.0;
  std::map<std::string, int> ca, cb;
  for (std::size_t i = 1; i < a.size(); ++i) ca[a.substr(i - 1, 2)]++;
  for (std::size_t i = 1; i < b.size(); ++i) cb[b.substr(i - 1, 2)]++;
  if (ca.empty() || cb.empty()) return 0.0;
  long dot = 0, na = 0, nb = 0;
  for (auto& [k, v] : ca) {
    na += v * v;
    if (cb.count(k)) dot += v * cb[k];
  }
  for (auto& [k, v] : cb) nb += v * v;
  return static_cast<double>(dot) / std::sqrt(static_cast<double>(na) * static_cast<double>(nb));
}

// Single-frame clip of the given size whose mask covers exactly `on` pixels.
inline VideoClip filter_clip_fixture(std::size_t h, std::size_t w, std::size_t on, const std::string& label) {
  VideoClip c;
  std::vector<float> mask(h * w, 0.0f);
  for (std::size_t i = 0; i < on; ++i) mask[i] = 1.0f;
  c.frames.emplace_back(Shape{3, h, w}, std::vector<float>(3 * h * w, 0.5f));
  c.masks.emplace_back(Shape{1, h, w}, std::move(mask));
  c.subject_label = label;
  c.caption = "a clip";
  return c;
}

inline std::string expect_label(const std::string& a, const std::vector<std::string>& w,
                                const std::vector<std::string>& s, double theta, const std::string& want) {
  const std::string got = select_subject_label(a, w, s, theta);
  return got == want ? "" : "expected '" + want + "', got '" + got + "'";
}

inline std::string expect_filter(const VideoClip& clip, const CurationConfig& cfg, bool keep,
                                 const std::string& reason) {
  const auto d = filter_clip(clip, cfg);
  if (d.keep == keep && d.reason == reason) return "";
  return "expected " + std::string(keep ? "keep" : "reject '" + reason + "'") + ", got " +
         (d.keep ? "keep" : "reject '" + d.reason + "'");
}

inline std::vector<CuratedCase> curated_cases() {
  std::vector<CuratedCase> cases;
  cases.push_back({"label: exact match returns the answer",
                   [] { return expect_label("dog", {"animal", "dog", "cat"}, {}, 0.8, "dog"); }});
  cases.push_back({"label: fallback picks the best noun",
                   [] { return expect_label("sunset", {"dog", "cat"}, {"cat", "beach"}, 0.8, "cat"); }});
  cases.push_back({"label: fallback result matches exhaustive oracle", [] {
                     const std::vector<std::string> w{"dog"}, s{"woman"};
                     if (oracle_similarity("doggo", "dog") > 0.9) return std::string("oracle unexpectedly above theta");
                     std::string best;
                     double score = -1;
                     for (const auto& n : s) {
                       double m = 0;
                       for (const auto& x : w) m = std::max(m, oracle_similarity(n, x));
                       if (m > score) score = m, best = n;
                     }
                     return expect_label("doggo", w, s, 0.9, best);
                   }});
  cases.push_back({"label: ties go to the earliest noun",
                   [] { return expect_label("sunset", {"dog"}, {"cat", "bird", "fish"}, 0.8, "cat"); }});
  cases.push_back({"label: equal positive scores go to the earliest noun",
                   [] { return expect_label("sunset", {"red square"}, {"Red Square", "red square"}, 0.8, "Red Square"); }});
  cases.push_back({"label: empty noun list on fallback throws", []() -> std::string {
                     try {
                       select_subject_label("sunset", {"dog"}, {}, 0.8);
                     } catch (const ValueError&) {
                       return "";
                     }
                     return "no error raised";
                   }});
  cases.push_back({"label: similarity equal to theta is not enough",
                   [] { return expect_label("dog", {"dog"}, {"cat"}, 1.0, "cat"); }});
  cases.push_back({"label: similarity just above theta keeps the answer", [] {
                     // sim(doggo, dog) = 2 / sqrt(8)
                     return expect_label("doggo", {"dog"}, {"cat"}, 0.70, "doggo");
                   }});
  cases.push_back({"label: similarity just below theta falls back",
                   [] { return expect_label("doggo", {"dog"}, {"cat"}, 0.71, "cat"); }});

  CurationConfig cfg;  // default thresholds: 512 px, [5%, 60%]
  cases.push_back({"filter: 640x480 rejected on short side",
                   [cfg] { return expect_filter(filter_clip_fixture(480, 640, 480 * 640 / 4, "dog"), cfg, false, "short-side"); }});
  cases.push_back({"filter: short side 511 rejected",
                   [cfg] { return expect_filter(filter_clip_fixture(511, 640, 511 * 640 / 4, "dog"), cfg, false, "short-side"); }});
  cases.push_back({"filter: short side exactly 512 kept",
                   [cfg] { return expect_filter(filter_clip_fixture(512, 640, 512 * 640 * 3 / 10, "dog"), cfg, true, ""); }});
  // 512x640 = 327680 pixels; 5% = 16384, 60% = 196608, 4% = 13107.2.
  cases.push_back({"filter: area ratio 0.04 rejected",
                   [cfg] { return expect_filter(filter_clip_fixture(512, 640, 13107, "dog"), cfg, false, "area-ratio"); }});
  cases.push_back({"filter: area ratio one pixel under 5% rejected",
                   [cfg] { return expect_filter(filter_clip_fixture(512, 640, 16383, "dog"), cfg, false, "area-ratio"); }});
  cases.push_back({"filter: area ratio exactly 5% kept",
                   [cfg] { return expect_filter(filter_clip_fixture(512, 640, 16384, "dog"), cfg, true, ""); }});
  cases.push_back({"filter: area ratio exactly 60% kept",
                   [cfg] { return expect_filter(filter_clip_fixture(512, 640, 196608, "dog"), cfg, true, ""); }});
  cases.push_back({"filter: area ratio one pixel over 60% rejected",
                   [cfg] { return expect_filter(filter_clip_fixture(512, 640, 196609, "dog"), cfg, false, "area-ratio"); }});
  cases.push_back({"filter: meaningless label rejected",
                   [cfg] { return expect_filter(filter_clip_fixture(512, 640, 98304, "thing"), cfg, false, "meaningless-label"); }});
  cases.push_back({"filter: empty label rejected",
                   [cfg] { return expect_filter(filter_clip_fixture(512, 640, 98304, ""), cfg, false, "meaningless-label"); }});
  cases.push_back({"filter: first failing rule is reported",
                   [cfg] { return expect_filter(filter_clip_fixture(480, 640, 10, ""), cfg, false, "short-side"); }});
  return cases;
}

}  // namespace magdiff::testing
