#ifndef FFFNER_PREDICT_H_
#define FFFNER_PREDICT_H_

#include <ostream>
#include <string>
#include <vector>

#include "fffner/corpus.h"
#include "fffner/encoder.h"
#include "fffner/formulate.h"

namespace fffner {

inline constexpr double kEntityThreshold = 0.5;

struct SpanPrediction {
  Span span;
  double entity_prob = 0.0;
  int type_id = 0;
  double type_prob = 0.0;
};

struct PredictConfig {
  Variant variant = Variant::kFff;
  MaxSpanLen max_span_len;
};

// Converts head logits into a prediction. With an is-entity head the
// probability is its softmax entity component; with a joint head it is one
// minus the "not an entity" class probability and the type is the argmax
// over the real types.
SpanPrediction ToPrediction(const Span &span, const HeadOutput &output);

// One prediction per span within max_span_len, in AllSpans order.
std::vector<SpanPrediction> ScoreSentence(const ModelParams &params,
                                          const Sentence &sentence,
                                          const PredictConfig &cfg,
                                          int sentence_id = 0);

// Keeps spans with entity_prob >= 0.5 and accepts them greedily by
// descending probability, skipping any that overlap an accepted span. Ties
// go to the earlier start, then the shorter span, then the lower type id.
// The result is sorted by start.
std::vector<TypedSpan> Resolve(std::vector<SpanPrediction> predictions);

// Predicted entities for each sentence, in corpus order.
std::vector<std::vector<TypedSpan>> PredictCorpus(const ModelParams &params,
                                                  const Corpus &corpus,
                                                  const PredictConfig &cfg);

// {"sentence_id": int, "entities": [{"start","end","type"}]} per line.
void WritePredictionsJsonl(const std::vector<std::vector<TypedSpan>> &predictions,
                           const TypeInventory &types, std::ostream &out);
std::vector<std::vector<TypedSpan>> ReadPredictionsJsonl(
    std::istream &in, const TypeInventory &types);

}  // namespace fffner

#endif  // FFFNER_PREDICT_H_
