#ifndef FFFNER_FORMULATE_H_
#define FFFNER_FORMULATE_H_

#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "fffner/corpus.h"

namespace fffner {

inline constexpr std::string_view kDefaultMaskToken = "<mask>";
inline constexpr std::string_view kOpenBracket = "[";
inline constexpr std::string_view kCloseBracket = "]";
inline constexpr std::string_view kTypeSeparator = "|";
// Literal slot fillers used by the kNotMask variant.
inline constexpr std::string_view kSpanLiteral = "span";
inline constexpr std::string_view kTypeLiteral = "type";

enum class Variant {
  kFff,              // w.. [ M ] [ span ] [ M ] w..
  kNotMask,          // w.. [ span ] [ span-tokens ] [ type ] w..
  kNoBrackets,       // w.. M span-tokens M w..
  kSpanTypeTogether, // w.. [ span-tokens ] [ M ] w..
  kGenre,            // sequence linearization only
  kTanl,             // sequence linearization only
};

std::string_view VariantName(Variant variant);
Variant ParseVariant(std::string_view name);

// True when the variant has a separate is-entity slot (and binary head).
bool HasEntitySlot(Variant variant);

// A (sentence, span) pair rendered as encoder input. `entity_type` is the
// gold type when the span is a gold entity, nullopt for a negative.
struct FormulatedInstance {
  std::vector<std::string> tokens;
  std::optional<int> is_entity_pos;
  std::optional<int> which_type_pos;
  Span span;
  std::optional<int> entity_type;
  int sentence_id = 0;

  bool positive() const { return entity_type.has_value(); }
  bool operator==(const FormulatedInstance &) const = default;
};

// The label is taken from the sentence's gold entities.
FormulatedInstance Formulate(const Sentence &sentence, const Span &span,
                             Variant variant, int sentence_id = 0,
                             std::string_view mask_token = kDefaultMaskToken);

// Number of tokens a variant inserts around the span.
int InsertedTokenCount(Variant variant);

// {"tokens", "is_entity_pos", "which_type_pos", "span", "label", "sentence_id"}
void WriteInstancesJsonl(const std::vector<FormulatedInstance> &instances,
                         const TypeInventory &types, std::ostream &out);

enum class ParseMode { kStrict, kLenient };

struct DelinearizeResult {
  Sentence sentence;
  // Lenient mode only: dropped brackets and discarded spans.
  int warnings = 0;
};

// GENRE: "[ w_l .. w_r ] [ Type ]"; TANL: "[ w_l .. w_r | Type ]". Sentence
// tokens that collide with the markup symbols are escaped with a leading
// backslash so that delinearization is an exact inverse.
std::vector<std::string> Linearize(const Sentence &sentence, Variant format,
                                   const TypeInventory &types);

DelinearizeResult Delinearize(const std::vector<std::string> &tokens,
                              Variant format, const TypeInventory &types,
                              ParseMode mode);

}  // namespace fffner

#endif  // FFFNER_FORMULATE_H_
