#include "fffner/corpus.h"

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

#include "fffner/error.h"
#include "fffner/json_io.h"

namespace fffner {
namespace {

std::vector<std::string> SplitWhitespace(const std::string &line) {
  std::vector<std::string> fields;
  std::istringstream in(line);
  std::string field;
  while (in >> field) fields.push_back(field);
  return fields;
}

bool IsBlank(const std::string &line) {
  return std::all_of(line.begin(), line.end(),
                     [](unsigned char c) { return std::isspace(c); });
}

std::string AtLine(int line) { return "line " + std::to_string(line); }

// Intermediate sentence with string types, resolved once the inventory is
// known.
struct RawEntity {
  int start;
  int end;
  std::string type;
  int line;
};

struct RawSentence {
  std::vector<std::string> tokens;
  std::vector<RawEntity> entities;
};

}  // namespace

TypeInventory::TypeInventory(std::vector<std::string> names)
    : names_(std::move(names)) {
  for (int i = 0; i < size(); ++i) {
    if (names_[i].empty()) {
      throw DataError("InvalidInventory", "empty type name");
    }
    if (!index_.emplace(names_[i], i).second) {
      throw DataError("InvalidInventory", "duplicate type name " + names_[i]);
    }
  }
}

TypeInventory TypeInventory::FromUnsorted(std::vector<std::string> names) {
  std::set<std::string> unique(names.begin(), names.end());
  return TypeInventory(std::vector<std::string>(unique.begin(), unique.end()));
}

std::optional<int> TypeInventory::Find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string_view SplitName(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kDev: return "dev";
    case Split::kTest: return "test";
  }
  return "train";
}

Split ParseSplit(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "dev") return Split::kDev;
  if (name == "test") return Split::kTest;
  throw UsageError("UnknownSplit", std::string(name));
}

Corpus ParseBio(std::istream &in, const BioOptions &options) {
  std::vector<RawSentence> raw;
  RawSentence current;
  // Type of the entity run the previous token belongs to, if any.
  std::optional<std::string> open_type;

  auto flush = [&]() {
    if (!current.tokens.empty()) raw.push_back(std::move(current));
    current = RawSentence();
    open_type.reset();
  };

  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (IsBlank(line)) {
      flush();
      continue;
    }
    std::vector<std::string> fields = SplitWhitespace(line);
    if (fields.size() != 2) {
      throw DataError("MalformedLine",
                      AtLine(line_number) + ": expected 2 fields, got " +
                          std::to_string(fields.size()));
    }
    const std::string &tag = fields[1];
    const int position = static_cast<int>(current.tokens.size());
    current.tokens.push_back(fields[0]);

    if (tag == "O") {
      open_type.reset();
      continue;
    }
    if (tag.size() < 3 || (tag[0] != 'B' && tag[0] != 'I') || tag[1] != '-') {
      throw DataError("UnknownTag", AtLine(line_number) + ": tag '" + tag + "'");
    }
    std::string type = tag.substr(2);
    bool begins = tag[0] == 'B';
    if (!begins && open_type != type) {
      if (options.strict) {
        throw DataError("DanglingInside",
                        AtLine(line_number) + ": " + tag +
                            " does not continue an entity of that type");
      }
      begins = true;
    }
    if (begins) {
      current.entities.push_back({position, position, type, line_number});
    } else {
      current.entities.back().end = position;
    }
    open_type = std::move(type);
  }
  flush();

  if (raw.empty()) throw DataError("EmptyInput", "no sentences in BIO input");

  TypeInventory types;
  if (options.fixed_types) {
    types = *options.fixed_types;
  } else {
    std::vector<std::string> names;
    for (const RawSentence &s : raw) {
      for (const RawEntity &e : s.entities) names.push_back(e.type);
    }
    types = TypeInventory::FromUnsorted(std::move(names));
  }

  Corpus corpus;
  corpus.types = types;
  corpus.split = options.split;
  corpus.sentences.reserve(raw.size());
  for (RawSentence &s : raw) {
    Sentence sentence;
    sentence.tokens = std::move(s.tokens);
    for (const RawEntity &e : s.entities) {
      std::optional<int> id = types.Find(e.type);
      if (!id) {
        throw DataError("UnknownType", AtLine(e.line) + ": entity type '" +
                                           e.type + "' not in inventory");
      }
      sentence.entities.push_back({e.start, e.end, *id});
    }
    corpus.sentences.push_back(std::move(sentence));
  }
  return corpus;
}

void EmitBio(const Corpus &corpus, std::ostream &out) {
  bool first = true;
  for (const Sentence &sentence : corpus.sentences) {
    if (!first) out << '\n';
    first = false;
    std::vector<std::string> tags(sentence.tokens.size(), "O");
    for (const TypedSpan &e : sentence.entities) {
      const std::string &name = corpus.types.name(e.type_id);
      tags[e.start] = "B-" + name;
      for (int i = e.start + 1; i <= e.end; ++i) tags[i] = "I-" + name;
    }
    for (size_t i = 0; i < tags.size(); ++i) {
      out << sentence.tokens[i] << '\t' << tags[i] << '\n';
    }
  }
}

std::vector<Span> AllSpans(int n, MaxSpanLen max_len) {
  const int cap = max_len ? std::min(*max_len, n) : n;
  std::vector<Span> spans;
  if (cap <= 0) return spans;
  spans.reserve(static_cast<size_t>(n) * cap);
  for (int l = 0; l < n; ++l) {
    for (int r = l; r < n && r - l + 1 <= cap; ++r) spans.push_back({l, r});
  }
  return spans;
}

void ValidateSentence(const Sentence &sentence, int type_count) {
  if (sentence.tokens.empty()) {
    throw DataError("EmptySentence", "sentence has no tokens");
  }
  for (const std::string &token : sentence.tokens) {
    if (token.empty() ||
        std::any_of(token.begin(), token.end(),
                    [](unsigned char c) { return std::isspace(c); })) {
      throw DataError("InvalidToken", "token '" + token + "'");
    }
  }
  int previous_end = -1;
  for (const TypedSpan &e : sentence.entities) {
    if (e.start < 0 || e.end < e.start || e.end >= sentence.size()) {
      throw DataError("InvalidSpan", "entity [" + std::to_string(e.start) +
                                         ", " + std::to_string(e.end) +
                                         "] outside sentence");
    }
    if (e.type_id < 0 || e.type_id >= type_count) {
      throw DataError("UnknownType",
                      "type id " + std::to_string(e.type_id) + " out of range");
    }
    if (e.start <= previous_end) {
      throw DataError("OverlappingEntities",
                      "entities must be sorted and non-overlapping");
    }
    previous_end = e.end;
  }
}

int EntityOverlap(const Sentence &sentence, const Span &span) {
  int covered = 0;
  for (const TypedSpan &e : sentence.entities) {
    const int lo = std::max(e.start, span.start);
    const int hi = std::min(e.end, span.end);
    if (lo <= hi) covered += hi - lo + 1;
  }
  return covered;
}

int LongestEntity(const std::vector<Sentence> &sentences) {
  int longest = 0;
  for (const Sentence &s : sentences) {
    for (const TypedSpan &e : s.entities) {
      longest = std::max(longest, e.end - e.start + 1);
    }
  }
  return longest;
}

// ---------------------------------------------------------------------------
// JSON

Json EntitiesToJson(const std::vector<TypedSpan> &entities,
                    const TypeInventory &types) {
  Json array = Json::array();
  for (const TypedSpan &e : entities) {
    array.push_back(
        {{"start", e.start}, {"end", e.end}, {"type", types.name(e.type_id)}});
  }
  return array;
}

Json SentenceToJson(const Sentence &sentence, const TypeInventory &types) {
  return {{"tokens", sentence.tokens},
          {"entities", EntitiesToJson(sentence.entities, types)}};
}

std::vector<TypedSpan> EntitiesFromJson(const Json &entities,
                                        const TypeInventory &types) {
  if (!entities.is_array()) {
    throw DataError("SchemaMismatch", "\"entities\" must be an array");
  }
  std::vector<TypedSpan> result;
  for (const Json &e : entities) {
    if (!e.is_object() || !e.contains("start") || !e.contains("end") ||
        !e.contains("type") || !e["start"].is_number_integer() ||
        !e["end"].is_number_integer() || !e["type"].is_string()) {
      throw DataError("SchemaMismatch",
                      "entity must have integer start/end and string type");
    }
    const std::string name = e["type"].get<std::string>();
    std::optional<int> id = types.Find(name);
    if (!id) {
      throw DataError("UnknownType",
                      "entity type '" + name + "' not in inventory");
    }
    result.push_back({e["start"].get<int>(), e["end"].get<int>(), *id});
  }
  std::sort(result.begin(), result.end());
  return result;
}

Sentence SentenceFromJson(const Json &object, const TypeInventory &types) {
  if (!object.is_object() || !object.contains("tokens") ||
      !object["tokens"].is_array()) {
    throw DataError("SchemaMismatch", "sentence needs a \"tokens\" array");
  }
  Sentence sentence;
  for (const Json &t : object["tokens"]) {
    if (!t.is_string()) throw DataError("SchemaMismatch", "token not a string");
    sentence.tokens.push_back(t.get<std::string>());
  }
  if (object.contains("entities")) {
    sentence.entities = EntitiesFromJson(object["entities"], types);
  }
  ValidateSentence(sentence, types.size());
  return sentence;
}

Json ParseJsonLine(const std::string &line, int line_number) {
  try {
    return Json::parse(line);
  } catch (const Json::parse_error &e) {
    throw DataError("SchemaMismatch",
                    AtLine(line_number) + ": invalid JSON: " + e.what());
  }
}

void WriteCorpusJsonl(const Corpus &corpus, std::ostream &out) {
  for (const Sentence &sentence : corpus.sentences) {
    out << SentenceToJson(sentence, corpus.types).dump() << '\n';
  }
}

Corpus ReadCorpusJsonl(std::istream &in,
                       const std::optional<TypeInventory> &fixed_types,
                       Split split) {
  std::vector<Json> objects;
  std::string line;
  int line_number = 0;
  std::vector<std::string> names;
  while (std::getline(in, line)) {
    ++line_number;
    if (IsBlank(line)) continue;
    Json object = ParseJsonLine(line, line_number);
    if (object.contains("entities") && object["entities"].is_array()) {
      for (const Json &e : object["entities"]) {
        if (e.contains("type") && e["type"].is_string()) {
          names.push_back(e["type"].get<std::string>());
        }
      }
    }
    objects.push_back(std::move(object));
  }
  Corpus corpus;
  corpus.split = split;
  corpus.types =
      fixed_types ? *fixed_types : TypeInventory::FromUnsorted(std::move(names));
  for (const Json &object : objects) {
    corpus.sentences.push_back(SentenceFromJson(object, corpus.types));
  }
  return corpus;
}

}  // namespace fffner
