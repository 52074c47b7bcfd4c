#ifndef FFFNER_JSON_IO_H_
#define FFFNER_JSON_IO_H_

// JSON conversions shared by the corpus, episode, prediction and instance
// file formats.

#include <string>
#include <vector>

#include "fffner/corpus.h"
#include "json.hpp"

namespace fffner {

using Json = nlohmann::json;

Json EntitiesToJson(const std::vector<TypedSpan> &entities,
                    const TypeInventory &types);
Json SentenceToJson(const Sentence &sentence, const TypeInventory &types);

// Entities reference types by name; every name must be in `types`.
std::vector<TypedSpan> EntitiesFromJson(const Json &entities,
                                        const TypeInventory &types);
Sentence SentenceFromJson(const Json &object, const TypeInventory &types);

// Parses one non-empty JSONL line; errors cite the line number.
Json ParseJsonLine(const std::string &line, int line_number);

}  // namespace fffner

#endif  // FFFNER_JSON_IO_H_
