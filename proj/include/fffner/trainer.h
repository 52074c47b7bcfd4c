#ifndef FFFNER_TRAINER_H_
#define FFFNER_TRAINER_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fffner/encoder.h"
#include "fffner/episode.h"
#include "fffner/formulate.h"
#include "fffner/sampler.h"

namespace fffner {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 2e-4;
  double weight_decay = 0.01;
  uint64_t seed = 0;
  Variant variant = Variant::kFff;
  SamplerConfig sampler;
  int threads = 1;
};

struct EpochStats {
  int epoch = 0;
  double positive_loss = 0.0;  // mean over positive instances
  double negative_loss = 0.0;  // mean over negative instances
  double total_loss = 0.0;     // mean over all instances
  int positives = 0;
  int negatives = 0;
  double grad_norm = 0.0;  // mean L2 norm of the batch gradients
};

struct TrainStats {
  std::vector<EpochStats> epochs;
  double wall_seconds = 0.0;
  std::optional<int> diverged_at_epoch;
};

// Width of the which-type head for a variant over |C| types.
int TypeHeadWidth(Variant variant, int type_count);

// Positives (one per gold entity) and freshly sampled negatives for every
// sentence, formulated under cfg.variant and shuffled by (seed, epoch).
std::vector<FormulatedInstance> BuildEpochDataset(const Episode &episode,
                                                  const TrainConfig &cfg,
                                                  int epoch);

// Fine-tunes `params` in place. The type head must already have the width
// the variant needs. Throws DivergenceError if training stops being finite.
TrainStats Train(const Episode &episode, const TrainConfig &cfg,
                 ModelParams *params);

void WriteTrainStatsJsonl(const TrainStats &stats, std::ostream &out);

}  // namespace fffner

#endif  // FFFNER_TRAINER_H_
