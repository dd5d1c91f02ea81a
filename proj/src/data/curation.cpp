#include "magdiff/curation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

namespace magdiff {

namespace {

std::string lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::map<std::string, double> bigram_counts(const std::string& s) {
  std::map<std::string, double> counts;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) counts[s.substr(i, 2)] += 1.0;
  return counts;
}

}  // namespace

double text_similarity(const std::string& a, const std::string& b) {
  const std::string la = lower(a), lb = lower(b);
  if (la == lb) return 1.0;
  const auto ca = bigram_counts(la), cb = bigram_counts(lb);
  if (ca.empty() || cb.empty()) return 0.0;
  double dot = 0, na = 0, nb = 0;
  for (const auto& [k, v] : ca) {
    na += v * v;
    auto it = cb.find(k);
    if (it != cb.end()) dot += v * it->second;
  }
  for (const auto& [k, v] : cb) nb += v * v;
  return std::min(1.0, dot / std::sqrt(na * nb));
}

std::string select_subject_label(const std::string& answer, const std::vector<std::string>& subject_aware,
                                 const std::vector<std::string>& nouns, double theta) {
  if (subject_aware.empty()) throw ValueError("subject-aware list is empty");
  double best_answer = 0;
  for (const auto& w : subject_aware) best_answer = std::max(best_answer, text_similarity(answer, w));
  if (best_answer > theta) return answer;
  if (nouns.empty()) throw ValueError("no candidate nouns for fallback label selection of '" + answer + "'");
  std::size_t best = 0;
  double best_score = -1;
  for (std::size_t j = 0; j < nouns.size(); ++j) {
    double score = 0;
    for (const auto& w : subject_aware) score = std::max(score, text_similarity(nouns[j], w));
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return nouns[best];
}

std::vector<std::string> tokenize_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) words.push_back(cur);
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return words;
}

std::vector<std::string> extract_nouns(const std::string& caption, const std::set<std::string>& lexicon) {
  std::vector<std::string> nouns;
  for (const auto& w : tokenize_words(caption)) {
    if (lexicon.count(w) && std::find(nouns.begin(), nouns.end(), w) == nouns.end()) nouns.push_back(w);
  }
  return nouns;
}

void CurationConfig::validate() const {
  if (theta < 0.0 || theta > 1.0) throw ValueError("theta must lie in [0,1]");
  if (min_area_ratio > max_area_ratio) throw ValueError("area ratio bounds are not ordered");
}

nlohmann::json CurationConfig::to_json() const {
  return {{"theta", theta},
          {"subject_aware", subject_aware},
          {"min_short_side", min_short_side},
          {"area_ratio_bounds", {min_area_ratio, max_area_ratio}},
          {"meaningless_labels", meaningless_labels}};
}

CurationConfig CurationConfig::from_json(const nlohmann::json& j) {
  CurationConfig c;
  c.theta = j.at("theta").get<double>();
  c.subject_aware = j.at("subject_aware").get<std::vector<std::string>>();
  c.min_short_side = j.at("min_short_side").get<std::size_t>();
  c.min_area_ratio = j.at("area_ratio_bounds").at(0).get<double>();
  c.max_area_ratio = j.at("area_ratio_bounds").at(1).get<double>();
  c.meaningless_labels = j.at("meaningless_labels").get<std::set<std::string>>();
  c.validate();
  return c;
}

double mean_area_ratio(const VideoClip& clip) {
  if (clip.masks.empty()) throw ValueError("clip has no masks");
  double total = 0;
  for (const auto& m : clip.masks) {
    double on = 0;
    for (auto v : m.data()) on += v > 0.5f ? 1.0 : 0.0;
    total += on / static_cast<double>(m.numel());
  }
  return total / static_cast<double>(clip.masks.size());
}

FilterDecision filter_clip(const VideoClip& clip, const CurationConfig& cfg) {
  if (std::min(clip.width(), clip.height()) < cfg.min_short_side) return {false, "short-side"};
  const double ratio = mean_area_ratio(clip);
  if (ratio < cfg.min_area_ratio || ratio > cfg.max_area_ratio) return {false, "area-ratio"};
  const std::string label = lower(clip.subject_label);
  if (label.empty() || cfg.meaningless_labels.count(label)) return {false, "meaningless-label"};
  return {true, ""};
}

std::string augment_caption(const std::string& caption, const std::string& subject_label) {
  if (subject_label.empty()) return caption;
  const std::string suffix = ", subject: " + subject_label;
  if (caption.size() >= suffix.size() && caption.compare(caption.size() - suffix.size(), suffix.size(), suffix) == 0) {
    return caption;
  }
  return caption + suffix;
}

nlohmann::json DatasetStats::to_json() const {
  nlohmann::json j;
  j["clips"] = clips;
  nlohmann::json ct = nlohmann::json::object();
  for (const auto& [k, v] : caption_tokens) ct[std::to_string(k)] = v;
  j["caption_tokens"] = ct;
  j["categories"] = categories;
  j["durations_s"] = durations;
  j["area_ratios"] = area_ratios;
  return j;
}

DatasetStats dataset_stats(const std::vector<VideoClip>& clips) {
  if (clips.empty()) throw ValueError("dataset_stats: empty dataset");
  DatasetStats s;
  s.clips = clips.size();
  char buf[32];
  for (const auto& c : clips) {
    const std::string& cap = c.augmented_caption.empty() ? c.caption : c.augmented_caption;
    s.caption_tokens[tokenize_words(cap).size()] += 1;
    s.categories[c.subject_label] += 1;
    std::snprintf(buf, sizeof buf, "%.2f", c.duration_seconds());
    s.durations[buf] += 1;
    const double bin = std::floor(mean_area_ratio(c) / 0.05) * 0.05;
    std::snprintf(buf, sizeof buf, "%.2f", bin);
    s.area_ratios[buf] += 1;
  }
  return s;
}

}  // namespace magdiff
