#include "fffner/pretrain.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fffner/error.h"
#include "fffner/optimizer.h"

namespace fffner {

MlmExample MakeMlmExample(const Sentence &sentence, const Vocabulary &vocab,
                          const MlmConfig &cfg, Rng &rng, int max_len) {
  const int n = std::min(sentence.size(), max_len);
  MlmExample example;
  example.ids.reserve(n);
  for (int i = 0; i < n; ++i) example.ids.push_back(vocab.Id(sentence.tokens[i]));

  const int count = std::clamp(
      static_cast<int>(std::floor(cfg.mask_rate * n + 0.5)), 1, n);
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (int k = 0; k < count; ++k) {
    const int j = k + static_cast<int>(rng.UniformInt(n - k));
    std::swap(order[k], order[j]);
  }
  std::vector<int> chosen(order.begin(), order.begin() + count);
  std::sort(chosen.begin(), chosen.end());
  for (int pos : chosen) {
    example.positions.push_back(pos);
    example.targets.push_back(example.ids[pos]);
    const double u = rng.Uniform();
    if (u < cfg.keep_rate) {
      // unchanged
    } else if (u < cfg.keep_rate + cfg.random_rate) {
      example.ids[pos] = static_cast<int>(rng.UniformInt(vocab.size()));
    } else {
      example.ids[pos] = vocab.mask_id();
    }
  }
  return example;
}

std::vector<double> MlmPretrain(const std::vector<Sentence> &sentences,
                                const MlmConfig &cfg, ModelParams *params) {
  if (sentences.empty()) throw DataError("EmptyCorpus", "nothing to pretrain on");
  if (cfg.batch_size < 1 || cfg.steps < 0) {
    throw UsageError("InvalidMlmConfig", "batch_size >= 1 and steps >= 0");
  }
  if (!(cfg.mask_rate > 0.0 && cfg.mask_rate <= 1.0) || cfg.keep_rate < 0.0 ||
      cfg.random_rate < 0.0 || cfg.keep_rate + cfg.random_rate > 1.0) {
    throw UsageError("InvalidMlmConfig", "mask/keep/random rates out of range");
  }
  std::vector<double> curve;
  if (cfg.steps == 0) return curve;

  AdamW optimizer(params->weights,
                  {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});
  Weights grad = params->weights.ZerosLike();
  std::vector<size_t> order(sentences.size());
  size_t cursor = order.size();
  uint64_t pass = 0;
  curve.reserve(cfg.steps);

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<MlmExample> batch;
    Rng mask_rng(cfg.seed, {0x4d4c4dULL, static_cast<uint64_t>(step)});
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle(cfg.seed, {0x5041535353ULL, pass++});
        shuffle.Shuffle(order);
        cursor = 0;
      }
      batch.push_back(MakeMlmExample(sentences[order[cursor++]], params->vocab,
                                     cfg, mask_rng, params->config.max_len));
    }
    BatchOptions options{true, cfg.seed, static_cast<uint64_t>(step),
                         cfg.threads};
    const BatchResult result =
        MlmBatchGradient(*params, std::span<const MlmExample>(batch), options, &grad);
    curve.push_back(result.mean_loss);
    optimizer.Step(&params->weights, grad,
                   LinearDecay(cfg.learning_rate, step, cfg.steps));
  }
  return curve;
}

}  // namespace fffner
