#ifndef FFFNER_EPISODE_H_
#define FFFNER_EPISODE_H_

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "fffner/corpus.h"

namespace fffner {

struct EpisodeSpec {
  int k_shots = 5;
  uint64_t seed = 0;
  int fold_id = 0;

  bool operator==(const EpisodeSpec &) const = default;
};

// An N-way K-shot support set: for every type in `types`, at least K of
// `train_sentences` mention it.
struct Episode {
  std::vector<Sentence> train_sentences;
  TypeInventory types;
  EpisodeSpec spec;

  bool operator==(const Episode &) const = default;
};

// Visits types in inventory order and draws, for each, K sentences that
// contain the type from those not already selected. The result is a pure
// function of (corpus, spec).
Episode SampleEpisode(const Corpus &corpus, const EpisodeSpec &spec);

// Throws unless every type has K supporting sentences.
void ValidateEpisode(const Episode &episode);

// JSON-lines: a header object with the sampling settings and type inventory followed by
// one sentence object per line.
void SaveEpisode(const Episode &episode, std::ostream &out);
Episode LoadEpisode(std::istream &in);
void SaveEpisodeFile(const Episode &episode, const std::string &path);
Episode LoadEpisodeFile(const std::string &path);

}  // namespace fffner

#endif  // FFFNER_EPISODE_H_
