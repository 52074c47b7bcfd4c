#ifndef FFFNER_CORPUS_H_
#define FFFNER_CORPUS_H_

#include <compare>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fffner {

// Inclusive token interval [start, end] within one sentence.
struct Span {
  int start = 0;
  int end = 0;

  int length() const { return end - start + 1; }
  bool Overlaps(const Span &other) const {
    return start <= other.end && other.start <= end;
  }
  auto operator<=>(const Span &) const = default;
};

// A span labeled with an index into the type inventory.
struct TypedSpan {
  int start = 0;
  int end = 0;
  int type_id = 0;

  Span span() const { return {start, end}; }
  auto operator<=>(const TypedSpan &) const = default;
};

// Tokenized sentence with gold entities. Entities are kept sorted by start
// and never overlap.
struct Sentence {
  std::vector<std::string> tokens;
  std::vector<TypedSpan> entities;

  int size() const { return static_cast<int>(tokens.size()); }
  bool operator==(const Sentence &) const = default;
};

// Ordered list of distinct entity type names; position is the type id.
class TypeInventory {
 public:
  TypeInventory() = default;
  explicit TypeInventory(std::vector<std::string> names);

  // Sorted, de-duplicated inventory.
  static TypeInventory FromUnsorted(std::vector<std::string> names);

  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string> &names() const { return names_; }
  const std::string &name(int id) const { return names_.at(id); }
  std::optional<int> Find(std::string_view name) const;

  bool operator==(const TypeInventory &other) const {
    return names_ == other.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, int> index_;
};

enum class Split { kTrain, kDev, kTest };

std::string_view SplitName(Split split);
Split ParseSplit(std::string_view name);

struct Corpus {
  std::vector<Sentence> sentences;
  TypeInventory types;
  Split split = Split::kTrain;

  bool operator==(const Corpus &) const = default;
};

// BIO and IOB2 denote the same tagging scheme: every entity opens with B-.
enum class BioScheme { kBio, kIob2 };

struct BioOptions {
  BioScheme scheme = BioScheme::kBio;
  // Strict mode rejects an I-X that does not continue a B-X/I-X run;
  // lenient mode repairs it to B-X.
  bool strict = false;
  std::optional<TypeInventory> fixed_types;
  Split split = Split::kTrain;
};

// Parses "token<ws>tag" lines with blank-line sentence separators. Errors
// carry the 1-based line number in the message.
Corpus ParseBio(std::istream &in, const BioOptions &options = {});
void EmitBio(const Corpus &corpus, std::ostream &out);

// Every span of a sentence of length n with length <= max_len (nullopt means
// unlimited), in lexicographic (start, end) order.
using MaxSpanLen = std::optional<int>;
std::vector<Span> AllSpans(int n, MaxSpanLen max_len = std::nullopt);

// Checks the Sentence invariants against an inventory of the given size.
void ValidateSentence(const Sentence &sentence, int type_count);

// Token count covered by any gold entity in [span.start, span.end].
int EntityOverlap(const Sentence &sentence, const Span &span);

// Longest gold entity length over a set of sentences (0 if none).
int LongestEntity(const std::vector<Sentence> &sentences);

// JSON-lines: one {"tokens": [...], "entities": [{"start","end","type"}]}
// object per sentence.
void WriteCorpusJsonl(const Corpus &corpus, std::ostream &out);
// The inventory is inferred (sorted) unless `fixed_types` is supplied.
Corpus ReadCorpusJsonl(std::istream &in,
                       const std::optional<TypeInventory> &fixed_types = {},
                       Split split = Split::kTrain);

}  // namespace fffner

#endif  // FFFNER_CORPUS_H_
