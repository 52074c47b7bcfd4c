#include "fffner/sampler.h"

#include <algorithm>
#include <cmath>

#include "fffner/error.h"
#include "fffner/rng.h"

namespace fffner {
namespace {

void CheckConfig(const SamplerConfig &cfg) {
  if (!(cfg.alpha > 0.0) || !(cfg.entity_token_ratio > 0.0)) {
    throw UsageError("InvalidSamplerConfig",
                     "alpha and entity_token_ratio must be positive");
  }
  if (cfg.max_span_len && *cfg.max_span_len < 1) {
    throw UsageError("InvalidSamplerConfig", "max_span_len must be >= 1");
  }
}

}  // namespace

std::vector<NegativeCandidate> EnumerateCandidates(const Sentence &sentence,
                                                   const SamplerConfig &cfg) {
  CheckConfig(cfg);
  std::vector<NegativeCandidate> candidates;
  for (const Span &span : AllSpans(sentence.size(), cfg.max_span_len)) {
    const bool gold = std::any_of(
        sentence.entities.begin(), sentence.entities.end(),
        [&](const TypedSpan &e) { return e.span() == span; });
    if (gold) continue;
    const int c = EntityOverlap(sentence, span);
    candidates.push_back(
        {span, c, std::exp(static_cast<double>(c) / span.length())});
  }
  return candidates;
}

namespace {

int BudgetFor(const Sentence &sentence, const SamplerConfig &cfg,
              int available) {
  if (available == 0) return 0;
  const double raw =
      cfg.alpha * (sentence.size() +
                   cfg.entity_token_ratio *
                       static_cast<double>(sentence.entities.size()));
  const double rounded = std::floor(raw + 0.5);
  const int budget = rounded >= available ? available : static_cast<int>(rounded);
  return std::max(budget, 1);
}

}  // namespace

int NegativeBudget(const Sentence &sentence, const SamplerConfig &cfg) {
  const int available =
      static_cast<int>(EnumerateCandidates(sentence, cfg).size());
  return BudgetFor(sentence, cfg, available);
}

std::vector<Span> SampleNegatives(const Sentence &sentence,
                                  const SamplerConfig &cfg, int sentence_id,
                                  int epoch) {
  std::vector<NegativeCandidate> pool = EnumerateCandidates(sentence, cfg);
  const int budget = BudgetFor(sentence, cfg, static_cast<int>(pool.size()));
  Rng rng(cfg.seed, {0x4e4547ULL, static_cast<uint64_t>(sentence_id),
                     static_cast<uint64_t>(epoch)});

  std::vector<Span> drawn;
  drawn.reserve(budget);
  double total = 0.0;
  for (const NegativeCandidate &c : pool) total += c.weight;
  for (int k = 0; k < budget; ++k) {
    const double target = rng.Uniform() * total;
    double running = 0.0;
    size_t pick = pool.size() - 1;
    for (size_t i = 0; i < pool.size(); ++i) {
      running += pool[i].weight;
      if (target < running) {
        pick = i;
        break;
      }
    }
    drawn.push_back(pool[pick].span);
    // Recompute the total from scratch so rounding never accumulates.
    pool.erase(pool.begin() + pick);
    total = 0.0;
    for (const NegativeCandidate &c : pool) total += c.weight;
  }
  return drawn;
}

}  // namespace fffner
