#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "magdiff/data.hpp"

namespace magdiff {

/// Cosine similarity of character-bigram count vectors of the lowercased
/// strings. Equal strings score 1 (including two empty strings); a string
/// with no bigrams scores 0 against any different string.
double text_similarity(const std::string& a, const std::string& b);

/// Subject label selection. Returns `answer` when its best similarity to the
/// subject-aware list exceeds `theta` (strictly); otherwise the noun whose
/// best similarity to the list is highest, earliest noun on ties.
/// Throws ValueError on an empty list, or when the fallback is needed and
/// `nouns` is empty.
std::string select_subject_label(const std::string& answer, const std::vector<std::string>& subject_aware,
                                 const std::vector<std::string>& nouns, double theta);

/// Rule-based noun matcher: words (lowercase, punctuation stripped) of the
/// caption that appear in `lexicon`, in caption order, without duplicates.
std::vector<std::string> extract_nouns(const std::string& caption, const std::set<std::string>& lexicon);

struct CurationConfig {
  double theta = 0.8;
  std::vector<std::string> subject_aware;
  std::size_t min_short_side = 512;
  double min_area_ratio = 0.05;
  double max_area_ratio = 0.60;
  std::set<std::string> meaningless_labels{"thing", "object", "stuff", "something", "it", "image", "picture"};

  void validate() const;
  nlohmann::json to_json() const;
  static CurationConfig from_json(const nlohmann::json& j);
};

struct FilterDecision {
  bool keep = true;
  std::string reason;  // "short-side", "area-ratio", "meaningless-label"; empty when kept
};

/// Mean over frames of (subject pixels / frame pixels).
double mean_area_ratio(const VideoClip& clip);

/// Applies the three rules in order; the reason names the first one failed.
FilterDecision filter_clip(const VideoClip& clip, const CurationConfig& cfg);

/// `caption + ", subject: " + label`; unchanged when the label is empty or
/// the caption already ends with that suffix.
std::string augment_caption(const std::string& caption, const std::string& subject_label);

/// Lowercased, punctuation-stripped whitespace tokens.
std::vector<std::string> tokenize_words(const std::string& text);

struct DatasetStats {
  std::size_t clips = 0;
  std::map<std::size_t, std::size_t> caption_tokens;
  std::map<std::string, std::size_t> categories;
  std::map<std::string, std::size_t> durations;       // key: seconds, "%.2f"
  std::map<std::string, std::size_t> area_ratios;     // key: bin lower edge, width 0.05
  nlohmann::json to_json() const;
};

/// Histograms of caption token length (augmented caption), subject label,
/// clip duration and mean mask area ratio. Throws on an empty dataset.
DatasetStats dataset_stats(const std::vector<VideoClip>& clips);

}  // namespace magdiff
