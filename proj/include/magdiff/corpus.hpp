#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "magdiff/curation.hpp"

namespace magdiff {

/// Shape names; the rule-based noun matcher's lexicon for synthetic captions.
std::set<std::string> synthetic_noun_lexicon();
/// Every "<color> <shape>" label the generator can produce.
std::vector<std::string> synthetic_subject_aware_list();

struct PrepareOptions {
  std::size_t clips = 100;
  std::uint64_t seed = 0;
  SpriteSpec base;  // geometry (size, frames, fps) shared by every clip
  CurationConfig curation;
};

struct RejectedClip {
  std::size_t index = 0;
  std::string reason;
};

struct PreparedCorpus {
  std::vector<VideoClip> clips;  // kept, in generation order
  std::vector<std::string> names;
  std::vector<RejectedClip> rejected;
  CurationConfig curation;
  std::uint64_t seed = 0;
};

/// Generates options.clips synthetic clips (clip i from Rng(seed).split(i)),
/// resolves each subject label with select_subject_label (answer = true
/// label, nouns from the caption), applies filter_clip and augments kept
/// captions.
PreparedCorpus prepare_synthetic_corpus(const PrepareOptions& options);

/// Writes clip directories, manifest.json {clips, curation, seed, rejected},
/// vocab.txt and, for a non-empty corpus, stats.json.
void write_corpus(const std::filesystem::path& dir, const PreparedCorpus& corpus);

}  // namespace magdiff
