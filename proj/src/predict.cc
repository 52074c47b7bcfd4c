#include "fffner/predict.h"

#include <algorithm>
#include <cmath>
#include <tuple>

#include "fffner/error.h"
#include "fffner/json_io.h"

namespace fffner {
namespace {

std::vector<double> Softmax(const std::vector<double> &logits) {
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - top);
    z += p[i];
  }
  for (double &x : p) x /= z;
  return p;
}

}  // namespace

SpanPrediction ToPrediction(const Span &span, const HeadOutput &output) {
  SpanPrediction prediction;
  prediction.span = span;
  const std::vector<double> types = Softmax(output.which_type_logits);
  size_t real_types = types.size();
  if (output.is_entity_logits) {
    const auto &l = *output.is_entity_logits;
    prediction.entity_prob = Softmax({l[0], l[1]})[0];
  } else {
    real_types = types.size() - 1;
    prediction.entity_prob = 1.0 - types.back();
  }
  const auto best = std::max_element(types.begin(), types.begin() + real_types);
  prediction.type_id = static_cast<int>(best - types.begin());
  prediction.type_prob = *best;
  return prediction;
}

std::vector<SpanPrediction> ScoreSentence(const ModelParams &params,
                                          const Sentence &sentence,
                                          const PredictConfig &cfg,
                                          int sentence_id) {
  const int longest = sentence.size() + InsertedTokenCount(cfg.variant);
  if (longest > params.config.max_len) {
    throw DataError("SequenceTooLong",
                    "sentence " + std::to_string(sentence_id) + " needs " +
                        std::to_string(longest) + " positions, max_len is " +
                        std::to_string(params.config.max_len));
  }
  std::vector<SpanPrediction> predictions;
  for (const Span &span : AllSpans(sentence.size(), cfg.max_span_len)) {
    const FormulatedInstance instance =
        Formulate(sentence, span, cfg.variant, sentence_id,
                  params.vocab.mask_token());
    const HeadOutput output = Score(params, EncodeInstance(params, instance));
    predictions.push_back(ToPrediction(span, output));
  }
  return predictions;
}

std::vector<TypedSpan> Resolve(std::vector<SpanPrediction> predictions) {
  std::erase_if(predictions, [](const SpanPrediction &p) {
    return !(p.entity_prob >= kEntityThreshold);
  });
  std::sort(predictions.begin(), predictions.end(),
            [](const SpanPrediction &a, const SpanPrediction &b) {
              if (a.entity_prob != b.entity_prob) {
                return a.entity_prob > b.entity_prob;
              }
              return std::make_tuple(a.span.start, a.span.length(), a.type_id) <
                     std::make_tuple(b.span.start, b.span.length(), b.type_id);
            });
  std::vector<TypedSpan> accepted;
  for (const SpanPrediction &p : predictions) {
    const bool clashes =
        std::any_of(accepted.begin(), accepted.end(), [&](const TypedSpan &a) {
          return a.span().Overlaps(p.span);
        });
    if (!clashes) accepted.push_back({p.span.start, p.span.end, p.type_id});
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

std::vector<std::vector<TypedSpan>> PredictCorpus(const ModelParams &params,
                                                  const Corpus &corpus,
                                                  const PredictConfig &cfg) {
  std::vector<std::vector<TypedSpan>> out;
  out.reserve(corpus.sentences.size());
  for (size_t i = 0; i < corpus.sentences.size(); ++i) {
    out.push_back(Resolve(ScoreSentence(params, corpus.sentences[i], cfg,
                                        static_cast<int>(i))));
  }
  return out;
}

void WritePredictionsJsonl(const std::vector<std::vector<TypedSpan>> &predictions,
                           const TypeInventory &types, std::ostream &out) {
  for (size_t i = 0; i < predictions.size(); ++i) {
    Json object = {{"sentence_id", i},
                   {"entities", EntitiesToJson(predictions[i], types)}};
    out << object.dump() << '\n';
  }
}

std::vector<std::vector<TypedSpan>> ReadPredictionsJsonl(
    std::istream &in, const TypeInventory &types) {
  std::vector<std::vector<TypedSpan>> out;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    const Json object = ParseJsonLine(line, line_number);
    if (!object.contains("sentence_id") ||
        !object["sentence_id"].is_number_integer() ||
        !object.contains("entities")) {
      throw DataError("SchemaMismatch", "line " + std::to_string(line_number) +
                                            ": prediction record");
    }
    const int id = object["sentence_id"].get<int>();
    if (id != static_cast<int>(out.size())) {
      throw DataError("IdMismatch", "line " + std::to_string(line_number) +
                                        ": expected sentence_id " +
                                        std::to_string(out.size()));
    }
    out.push_back(EntitiesFromJson(object["entities"], types));
  }
  return out;
}

}  // namespace fffner
