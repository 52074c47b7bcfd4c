#ifndef FFFNER_SAMPLER_H_
#define FFFNER_SAMPLER_H_

#include <cstdint>
#include <vector>

#include "fffner/corpus.h"

namespace fffner {

struct SamplerConfig {
  double alpha = 3.0;
  // Each gold entity counts as this many virtual tokens in the budget.
  double entity_token_ratio = 10.0;
  MaxSpanLen max_span_len;
  uint64_t seed = 0;
};

// A non-entity span with its overlap count c (tokens inside any gold
// entity) and sampling weight exp(c / length).
struct NegativeCandidate {
  Span span;
  int overlap_count = 0;
  double weight = 1.0;
};

// All spans within max_span_len whose interval is not a gold entity.
std::vector<NegativeCandidate> EnumerateCandidates(const Sentence &sentence,
                                                   const SamplerConfig &cfg);

// min(round_half_up(alpha * (n + ratio * |E|)), #candidates), and at least 1
// whenever a candidate exists.
int NegativeBudget(const Sentence &sentence, const SamplerConfig &cfg);

// Draws NegativeBudget spans without replacement, each draw proportional to
// weight among the remaining candidates. The stream depends only on
// (cfg.seed, sentence_id, epoch); the result lists spans in draw order.
std::vector<Span> SampleNegatives(const Sentence &sentence,
                                  const SamplerConfig &cfg, int sentence_id,
                                  int epoch);

}  // namespace fffner

#endif  // FFFNER_SAMPLER_H_
