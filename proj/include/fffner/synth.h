#ifndef FFFNER_SYNTH_H_
#define FFFNER_SYNTH_H_

#include <cstdint>

#include "fffner/corpus.h"

namespace fffner {

inline constexpr int kMaxSyntheticTypes = 6;

struct SynthConfig {
  int types = 4;         // 2..kMaxSyntheticTypes
  int sentences = 1000;  // >= 100
  uint64_t seed = 0;
};

// Template-generated corpus with per-type lexicons. Several surface tokens
// belong to more than one type's lexicon (a city that is also a surname, an
// organization named after a city), so typing needs context and span
// boundaries are ambiguous. The type inventory depends only on `types`.
Corpus GenerateSynthetic(const SynthConfig &config);

// Tokens per gold entity over the corpus.
double TokenEntityRatio(const Corpus &corpus);

}  // namespace fffner

#endif  // FFFNER_SYNTH_H_
