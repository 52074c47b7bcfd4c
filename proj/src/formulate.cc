#include "fffner/formulate.h"

#include <algorithm>

#include "fffner/error.h"
#include "fffner/json_io.h"

namespace fffner {
namespace {

std::optional<int> GoldType(const Sentence &sentence, const Span &span) {
  for (const TypedSpan &e : sentence.entities) {
    if (e.start == span.start && e.end == span.end) return e.type_id;
  }
  return std::nullopt;
}

bool IsMarkup(std::string_view token) {
  return token == kOpenBracket || token == kCloseBracket ||
         token == kTypeSeparator;
}

std::string Escape(const std::string &token) {
  if (IsMarkup(token) || (!token.empty() && token.front() == '\\')) {
    return "\\" + token;
  }
  return token;
}

std::string Unescape(const std::string &token) {
  if (token.size() > 1 && token.front() == '\\') return token.substr(1);
  return token;
}

// One successfully parsed entity group.
struct Group {
  std::vector<std::string> span_tokens;
  std::string type_name;
  size_t next = 0;  // index just past the group
};

// Parses a group starting at tokens[at] == "[". Returns nullopt and sets
// `failure` to the offending index when the markup is malformed.
std::optional<Group> ParseGroup(const std::vector<std::string> &tokens,
                                size_t at, Variant format, size_t *failure) {
  const std::string_view span_end =
      format == Variant::kTanl ? kTypeSeparator : kCloseBracket;
  Group group;
  size_t i = at + 1;
  while (i < tokens.size() && tokens[i] != span_end) {
    if (IsMarkup(tokens[i])) {
      *failure = i;
      return std::nullopt;
    }
    group.span_tokens.push_back(Unescape(tokens[i]));
    ++i;
  }
  if (i >= tokens.size() || group.span_tokens.empty()) {
    *failure = std::min(i, tokens.size());
    return std::nullopt;
  }
  ++i;  // past "]" or "|"
  if (format == Variant::kGenre) {
    if (i >= tokens.size() || tokens[i] != kOpenBracket) {
      *failure = i;
      return std::nullopt;
    }
    ++i;
  }
  if (i >= tokens.size() || IsMarkup(tokens[i])) {
    *failure = i;
    return std::nullopt;
  }
  group.type_name = Unescape(tokens[i]);
  ++i;
  if (i >= tokens.size() || tokens[i] != kCloseBracket) {
    *failure = i;
    return std::nullopt;
  }
  group.next = i + 1;
  return group;
}

void CheckLinearizationFormat(Variant format) {
  if (format != Variant::kGenre && format != Variant::kTanl) {
    throw UsageError("InvalidFormat",
                     "linearization format must be genre or tanl");
  }
}

}  // namespace

std::string_view VariantName(Variant variant) {
  switch (variant) {
    case Variant::kFff: return "fff";
    case Variant::kNotMask: return "not_mask";
    case Variant::kNoBrackets: return "no_brackets";
    case Variant::kSpanTypeTogether: return "span_type_together";
    case Variant::kGenre: return "genre";
    case Variant::kTanl: return "tanl";
  }
  return "fff";
}

Variant ParseVariant(std::string_view name) {
  for (Variant v : {Variant::kFff, Variant::kNotMask, Variant::kNoBrackets,
                    Variant::kSpanTypeTogether, Variant::kGenre,
                    Variant::kTanl}) {
    if (VariantName(v) == name) return v;
  }
  throw UsageError("UnknownVariant", std::string(name));
}

bool HasEntitySlot(Variant variant) {
  return variant == Variant::kFff || variant == Variant::kNotMask ||
         variant == Variant::kNoBrackets;
}

int InsertedTokenCount(Variant variant) {
  switch (variant) {
    case Variant::kFff:
    case Variant::kNotMask: return 8;
    case Variant::kNoBrackets: return 2;
    case Variant::kSpanTypeTogether: return 5;
    default: break;
  }
  throw UsageError("InvalidVariant", "linearization formats insert no slots");
}

FormulatedInstance Formulate(const Sentence &sentence, const Span &span,
                             Variant variant, int sentence_id,
                             std::string_view mask_token) {
  if (span.start < 0 || span.end < span.start || span.end >= sentence.size()) {
    throw DataError("InvalidSpan", "span [" + std::to_string(span.start) +
                                       ", " + std::to_string(span.end) +
                                       "] outside sentence of length " +
                                       std::to_string(sentence.size()));
  }
  if (variant == Variant::kGenre || variant == Variant::kTanl) {
    throw UsageError("InvalidVariant",
                     "genre/tanl are linearizations; use Linearize");
  }

  FormulatedInstance instance;
  instance.span = span;
  instance.sentence_id = sentence_id;
  instance.entity_type = GoldType(sentence, span);

  const std::string mask(mask_token);
  const std::string open(kOpenBracket);
  const std::string close(kCloseBracket);
  std::string entity_slot = mask;
  std::string type_slot = mask;
  if (variant == Variant::kNotMask) {
    entity_slot = kSpanLiteral;
    type_slot = kTypeLiteral;
  }
  const bool brackets = variant != Variant::kNoBrackets;

  std::vector<std::string> &out = instance.tokens;
  out.reserve(sentence.tokens.size() + 8);
  out.insert(out.end(), sentence.tokens.begin(),
             sentence.tokens.begin() + span.start);
  auto add_slot = [&](const std::string &slot) {
    if (brackets) out.push_back(open);
    const int position = static_cast<int>(out.size());
    out.push_back(slot);
    if (brackets) out.push_back(close);
    return position;
  };
  if (variant != Variant::kSpanTypeTogether) {
    instance.is_entity_pos = add_slot(entity_slot);
  }
  if (brackets) out.push_back(open);
  out.insert(out.end(), sentence.tokens.begin() + span.start,
             sentence.tokens.begin() + span.end + 1);
  if (brackets) out.push_back(close);
  instance.which_type_pos = add_slot(type_slot);
  out.insert(out.end(), sentence.tokens.begin() + span.end + 1,
             sentence.tokens.end());
  return instance;
}

void WriteInstancesJsonl(const std::vector<FormulatedInstance> &instances,
                         const TypeInventory &types, std::ostream &out) {
  for (const FormulatedInstance &instance : instances) {
    Json object = {
        {"tokens", instance.tokens},
        {"is_entity_pos", instance.is_entity_pos
                              ? Json(*instance.is_entity_pos)
                              : Json(nullptr)},
        {"which_type_pos", instance.which_type_pos
                               ? Json(*instance.which_type_pos)
                               : Json(nullptr)},
        {"span", {instance.span.start, instance.span.end}},
        {"label", instance.entity_type
                      ? "POS:" + types.name(*instance.entity_type)
                      : std::string("NEG")},
        {"sentence_id", instance.sentence_id}};
    out << object.dump() << '\n';
  }
}

std::vector<std::string> Linearize(const Sentence &sentence, Variant format,
                                   const TypeInventory &types) {
  CheckLinearizationFormat(format);
  std::vector<std::string> out;
  out.reserve(sentence.tokens.size() + 6 * sentence.entities.size());
  size_t next_entity = 0;
  for (int i = 0; i < sentence.size();) {
    if (next_entity < sentence.entities.size() &&
        sentence.entities[next_entity].start == i) {
      const TypedSpan &e = sentence.entities[next_entity++];
      out.emplace_back(kOpenBracket);
      for (int j = e.start; j <= e.end; ++j) {
        out.push_back(Escape(sentence.tokens[j]));
      }
      if (format == Variant::kGenre) {
        out.emplace_back(kCloseBracket);
        out.emplace_back(kOpenBracket);
      } else {
        out.emplace_back(kTypeSeparator);
      }
      out.push_back(Escape(types.name(e.type_id)));
      out.emplace_back(kCloseBracket);
      i = e.end + 1;
    } else {
      out.push_back(Escape(sentence.tokens[i]));
      ++i;
    }
  }
  return out;
}

DelinearizeResult Delinearize(const std::vector<std::string> &tokens,
                              Variant format, const TypeInventory &types,
                              ParseMode mode) {
  CheckLinearizationFormat(format);
  const bool strict = mode == ParseMode::kStrict;
  DelinearizeResult result;
  Sentence &sentence = result.sentence;

  size_t i = 0;
  while (i < tokens.size()) {
    const std::string &token = tokens[i];
    if (token == kOpenBracket) {
      size_t failure = i;
      std::optional<Group> group = ParseGroup(tokens, i, format, &failure);
      if (!group) {
        if (strict) {
          throw DataError("MalformedLinearization",
                          "unbalanced markup at token " +
                              std::to_string(failure));
        }
        ++result.warnings;
        ++i;
        continue;
      }
      const int start = sentence.size();
      sentence.tokens.insert(sentence.tokens.end(), group->span_tokens.begin(),
                             group->span_tokens.end());
      std::optional<int> type = types.Find(group->type_name);
      if (type) {
        sentence.entities.push_back({start, sentence.size() - 1, *type});
      } else if (strict) {
        throw DataError("UnknownType", "type '" + group->type_name +
                                           "' at token " + std::to_string(i));
      } else {
        ++result.warnings;
      }
      i = group->next;
    } else if (IsMarkup(token)) {
      if (strict) {
        throw DataError("MalformedLinearization",
                        "unexpected '" + token + "' at token " +
                            std::to_string(i));
      }
      ++result.warnings;
      ++i;
    } else {
      sentence.tokens.push_back(Unescape(token));
      ++i;
    }
  }
  return result;
}

}  // namespace fffner
