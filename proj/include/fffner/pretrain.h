#ifndef FFFNER_PRETRAIN_H_
#define FFFNER_PRETRAIN_H_

#include <cstdint>
#include <vector>

#include "fffner/corpus.h"
#include "fffner/encoder.h"

namespace fffner {

struct MlmConfig {
  int steps = 0;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double weight_decay = 0.01;
  // Fraction of positions selected per sentence; of those, keep_rate stay
  // unchanged, random_rate become a uniform random token, the rest <mask>.
  double mask_rate = 0.15;
  double keep_rate = 0.1;
  double random_rate = 0.1;
  uint64_t seed = 0;
  int threads = 1;
};

// Corrupts one sentence for masked-token prediction. At least one position
// is always selected.
MlmExample MakeMlmExample(const Sentence &sentence, const Vocabulary &vocab,
                          const MlmConfig &cfg, Rng &rng, int max_len);

// Runs cfg.steps optimizer steps of masked-token prediction over
// `sentences` and returns the per-step batch loss.
std::vector<double> MlmPretrain(const std::vector<Sentence> &sentences,
                                const MlmConfig &cfg, ModelParams *params);

}  // namespace fffner

#endif  // FFFNER_PRETRAIN_H_
