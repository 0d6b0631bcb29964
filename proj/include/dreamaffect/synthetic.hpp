#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dreamaffect/corpus.hpp"
#include "dreamaffect/emotion.hpp"
#include "dreamaffect/rng.hpp"

namespace dreamaffect {

/// Generated dream-like reports: filler narrative with one cue phrase injected
/// per emotion mention. Each series draws from its own filler vocabulary and
/// its own emotion prior, so series differ the way real collections do.
struct SyntheticSpec {
  std::size_t series = 6;
  std::size_t reports_per_series = 20;
  std::uint64_t seed = 42;
  bool labelled = true;     // false -> mentions stripped (cues stay in the text)
  double dreamer_share = 0.7;
  std::string id_prefix = "syn";
};

namespace detail {

inline const std::array<std::vector<std::string>, kEmotionCount>& cue_phrases() {
  static const std::array<std::vector<std::string>, kEmotionCount> cues{{
      {"felt angry", "was angry at them", "got angry and shouted"},
      {"was afraid", "felt afraid of it", "was afraid and ran"},
      {"felt sad", "was sad and crying", "felt sad and lonely"},
      {"was confused", "felt confused by it", "was confused and lost"},
      {"felt happy", "was happy and laughed", "felt happy with joy"},
  }};
  return cues;
}

inline const std::vector<std::string>& filler_pool() {
  static const std::vector<std::string> words{
      "house",   "street",  "school",   "car",     "river",   "door",    "table",  "window",
      "friend",  "mother",  "brother",  "teacher", "garden",  "train",   "city",   "beach",
      "walked",  "talked",  "opened",   "looked",  "drove",   "climbed", "found",  "carried",
      "old",     "blue",    "large",    "small",   "dark",    "bright",  "empty",  "crowded",
      "kitchen", "office",  "forest",   "hallway", "stairs",  "bridge",  "market", "church",
      "letter",  "phone",   "book",     "dog",     "cat",     "horse",   "boat",   "plane",
      "then",    "later",   "suddenly", "again",   "outside", "inside",  "near",   "behind"};
  return words;
}

inline const std::vector<std::string>& other_characters() {
  static const std::vector<std::string> chars{"1MSA", "1FKA", "2ISA", "1ANI", "1FMA"};
  return chars;
}

}  // namespace detail

inline Corpus generate_synthetic_corpus(const SyntheticSpec& spec) {
  Corpus corpus;
  corpus.provenance = {"synthetic:seed=" + std::to_string(spec.seed), ""};
  Rng rng(spec.seed);
  const auto& pool = detail::filler_pool();
  const auto& cues = detail::cue_phrases();

  for (std::size_t s = 0; s < spec.series; ++s) {
    const std::string series = "series-" + std::string(1, static_cast<char>('a' + s % 26)) +
                               (s >= 26 ? std::to_string(s / 26) : "");
    // Series-specific filler subset and emotion prior.
    std::vector<std::string> vocab;
    for (const auto& w : pool) {
      if (rng.bernoulli(0.5)) vocab.push_back(w);
    }
    if (vocab.size() < 8) vocab.assign(pool.begin(), pool.begin() + 8);
    std::array<double, kEmotionCount> prior{};
    double total = 0.0;
    for (double& p : prior) total += (p = 0.5 + rng.uniform01());

    for (std::size_t i = 0; i < spec.reports_per_series; ++i) {
      DreamReport r;
      r.id = spec.id_prefix + "-" + std::to_string(s) + "-" + std::to_string(i);
      r.series = series;

      std::vector<std::string> words;
      const auto length = 12 + rng.below(16);
      for (std::size_t w = 0; w < length; ++w) words.push_back(vocab[rng.below(vocab.size())]);

      const double u = rng.uniform01();
      const std::size_t n_mentions = u < 0.6 ? 1 : (u < 0.9 ? 2 : 3);
      for (std::size_t m = 0; m < n_mentions; ++m) {
        double pick = rng.uniform01() * total;
        std::size_t c = 0;
        while (c + 1 < kEmotionCount && pick >= prior[c]) pick -= prior[c++];
        const auto& phrases = cues[c];
        const auto& phrase = phrases[rng.below(phrases.size())];
        const auto at = rng.below(words.size() + 1);
        const bool dreamer = rng.bernoulli(spec.dreamer_share);
        const auto& chars = detail::other_characters();
        const std::string who = dreamer ? "I" : "the " + std::string(rng.bernoulli(0.5) ? "man" : "woman");
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), who + " " + phrase);
        r.mentions.push_back({dreamer ? std::string(kDreamerCharacter) : chars[rng.below(chars.size())],
                              static_cast<EmotionClass>(c)});
      }
      for (std::size_t w = 0; w < words.size(); ++w) {
        if (w) r.text += ' ';
        r.text += words[w];
      }
      r.text += '.';
      if (!spec.labelled) r.mentions.clear();
      corpus.reports.push_back(std::move(r));
    }
  }
  return corpus;
}

}  // namespace dreamaffect
