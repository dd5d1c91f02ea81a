#include "magdiff/corpus.hpp"

#include <cstdio>
#include <fstream>

#include "magdiff/conditioning.hpp"
#include "magdiff/error.hpp"

namespace magdiff {

namespace fs = std::filesystem;

std::set<std::string> synthetic_noun_lexicon() {
  std::set<std::string> out;
  for (auto s : {SpriteShape::kSquare, SpriteShape::kCircle, SpriteShape::kTriangle}) out.insert(shape_name(s));
  return out;
}

std::vector<std::string> synthetic_subject_aware_list() {
  std::vector<std::string> out;
  for (const auto& c : sprite_palette())
    for (auto s : {SpriteShape::kSquare, SpriteShape::kCircle, SpriteShape::kTriangle})
      out.push_back(std::string(c.name) + " " + shape_name(s));
  return out;
}

PreparedCorpus prepare_synthetic_corpus(const PrepareOptions& options) {
  options.curation.validate();
  PreparedCorpus corpus;
  corpus.curation = options.curation;
  corpus.seed = options.seed;
  const auto lexicon = synthetic_noun_lexicon();
  Rng root(options.seed);
  for (std::size_t i = 0; i < options.clips; ++i) {
    Rng rng = root.split(i);
    auto clip = gen_synthetic_clip(rng, random_sprite_spec(rng, options.base));
    clip.subject_label = select_subject_label(clip.subject_label, options.curation.subject_aware,
                                              extract_nouns(clip.caption, lexicon), options.curation.theta);
    const auto decision = filter_clip(clip, options.curation);
    if (!decision.keep) {
      corpus.rejected.push_back({i, decision.reason});
      continue;
    }
    clip.augmented_caption = augment_caption(clip.caption, clip.subject_label);
    char name[32];
    std::snprintf(name, sizeof(name), "clip_%04zu", i);
    corpus.names.push_back(name);
    corpus.clips.push_back(std::move(clip));
  }
  return corpus;
}

void write_corpus(const fs::path& dir, const PreparedCorpus& corpus) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory '" + dir.string() + "': " + ec.message());
  for (std::size_t i = 0; i < corpus.clips.size(); ++i) write_clip(dir / corpus.names[i], corpus.clips[i]);

  nlohmann::json rejected = nlohmann::json::array();
  for (const auto& r : corpus.rejected) rejected.push_back({{"index", r.index}, {"reason", r.reason}});
  const nlohmann::json manifest = {{"clips", corpus.names},
                                   {"curation", corpus.curation.to_json()},
                                   {"seed", corpus.seed},
                                   {"rejected", rejected}};
  auto write_text = [](const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + p.string() + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + p.string() + "'");
  };
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");

  std::vector<std::string> captions;
  for (const auto& c : corpus.clips) captions.push_back(c.augmented_caption);
  Vocab::build(captions).save(dir / "vocab.txt");
  if (!corpus.clips.empty()) write_text(dir / "stats.json", dataset_stats(corpus.clips).to_json().dump(2) + "\n");
}

}  // namespace magdiff
