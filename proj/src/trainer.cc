#include "fffner/trainer.h"

#include <chrono>
#include <cmath>

#include "fffner/error.h"
#include "fffner/json_io.h"
#include "fffner/optimizer.h"
#include "fffner/rng.h"

namespace fffner {

int TypeHeadWidth(Variant variant, int type_count) {
  return HasEntitySlot(variant) ? type_count : type_count + 1;
}

std::vector<FormulatedInstance> BuildEpochDataset(const Episode &episode,
                                                  const TrainConfig &cfg,
                                                  int epoch) {
  std::vector<FormulatedInstance> dataset;
  for (size_t i = 0; i < episode.train_sentences.size(); ++i) {
    const Sentence &sentence = episode.train_sentences[i];
    const int id = static_cast<int>(i);
    for (const TypedSpan &e : sentence.entities) {
      dataset.push_back(Formulate(sentence, e.span(), cfg.variant, id));
    }
    for (const Span &span : SampleNegatives(sentence, cfg.sampler, id, epoch)) {
      dataset.push_back(Formulate(sentence, span, cfg.variant, id));
    }
  }
  Rng rng(cfg.seed, {0x45504f4348ULL, static_cast<uint64_t>(epoch)});
  rng.Shuffle(dataset);
  return dataset;
}

TrainStats Train(const Episode &episode, const TrainConfig &cfg,
                 ModelParams *params) {
  if (cfg.epochs < 0 || cfg.batch_size < 1) {
    throw UsageError("InvalidTrainConfig", "epochs >= 0 and batch_size >= 1");
  }
  const int width = TypeHeadWidth(cfg.variant, episode.types.size());
  if (params->config.type_classes != width) {
    throw UsageError("HeadMismatch",
                     "type head has " +
                         std::to_string(params->config.type_classes) +
                         " classes, variant needs " + std::to_string(width));
  }
  const auto started = std::chrono::steady_clock::now();
  TrainStats stats;
  if (cfg.epochs == 0) return stats;

  // Every epoch has the same instance count: positives are fixed and the
  // negative budget depends only on the sentence.
  std::vector<FormulatedInstance> first = BuildEpochDataset(episode, cfg, 0);
  const int per_epoch = static_cast<int>(first.size());
  const int steps_per_epoch = (per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  const int total_steps = steps_per_epoch * cfg.epochs;

  AdamW optimizer(params->weights,
                  {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Weights grad = params->weights.ZerosLike();
  int step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<FormulatedInstance> dataset =
        epoch == 0 ? std::move(first) : BuildEpochDataset(episode, cfg, epoch);
    std::vector<EncodedInstance> encoded;
    encoded.reserve(dataset.size());
    for (const FormulatedInstance &instance : dataset) {
      encoded.push_back(EncodeInstance(*params, instance));
    }

    EpochStats es;
    es.epoch = epoch;
    double norm_sum = 0.0;
    int batches = 0;
    for (size_t begin = 0; begin < encoded.size(); begin += cfg.batch_size) {
      const size_t end = std::min(encoded.size(), begin + cfg.batch_size);
      std::span<const EncodedInstance> batch(encoded.data() + begin,
                                             end - begin);
      BatchResult result;
      try {
        result = SpanBatchGradient(
            *params, batch,
            {true, cfg.seed, static_cast<uint64_t>(step), cfg.threads}, &grad);
      } catch (const DivergenceError &) {
        stats.diverged_at_epoch = epoch;
        throw DivergenceError(epoch, "non-finite loss or gradient");
      }
      for (size_t i = 0; i < batch.size(); ++i) {
        const LossParts &loss = result.losses[i];
        if (batch[i].entity_type) {
          es.positive_loss += loss.total();
          ++es.positives;
        } else {
          es.negative_loss += loss.total();
          ++es.negatives;
        }
        es.total_loss += loss.total();
      }
      norm_sum += std::sqrt(grad.SquaredNorm());
      ++batches;
      optimizer.Step(&params->weights, grad,
                     LinearDecay(cfg.learning_rate, step, total_steps));
      ++step;
    }
    if (!params->weights.AllFinite()) {
      stats.diverged_at_epoch = epoch;
      throw DivergenceError(epoch, "parameters became non-finite");
    }
    const int count = es.positives + es.negatives;
    if (es.positives > 0) es.positive_loss /= es.positives;
    if (es.negatives > 0) es.negative_loss /= es.negatives;
    if (count > 0) es.total_loss /= count;
    es.grad_norm = batches > 0 ? norm_sum / batches : 0.0;
    stats.epochs.push_back(es);
  }
  stats.wall_seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - started)
                           .count();
  return stats;
}

void WriteTrainStatsJsonl(const TrainStats &stats, std::ostream &out) {
  for (const EpochStats &e : stats.epochs) {
    Json object = {{"epoch", e.epoch},
                   {"loss_pos", e.positive_loss},
                   {"loss_neg", e.negative_loss},
                   {"loss", e.total_loss},
                   {"positives", e.positives},
                   {"negatives", e.negatives},
                   {"grad_norm", e.grad_norm}};
    out << object.dump() << '\n';
  }
}

}  // namespace fffner
