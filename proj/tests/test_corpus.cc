#include <functional>
#include <sstream>

#include "doctest.h"
#include "fffner/corpus.h"
#include "fffner/error.h"
#include "fffner/json_io.h"
#include "helpers.h"

using namespace fffner;
using fffner::testing::RandomSentence;
using fffner::testing::TomSentence;
using fffner::testing::Words;

namespace {

Corpus Parse(const std::string &text, BioOptions options = {}) {
  std::istringstream in(text);
  return ParseBio(in, options);
}

std::string Emit(const Corpus &corpus) {
  std::ostringstream out;
  EmitBio(corpus, out);
  return out.str();
}

std::string KindOf(const std::function<void()> &f) {
  try {
    f();
  } catch (const Error &e) {
    return e.kind();
  }
  return "";
}

}  // namespace

TEST_CASE("parse_bio reads the Tom / Los Angeles sentence") {
  const Corpus c = Parse("Tom B-PER\nlives O\nin O\nLos B-LOC\nAngeles I-LOC\n");
  REQUIRE(c.sentences.size() == 1);
  CHECK(c.types.names() == std::vector<std::string>{"LOC", "PER"});
  CHECK(c.sentences[0] == TomSentence(1, 0));
}

TEST_CASE("parse_bio accepts tabs and blank-line separated sentences") {
  const Corpus c = Parse("a\tO\nb\tB-X\n\n\nc\tB-Y\n");
  REQUIRE(c.sentences.size() == 2);
  CHECK(c.sentences[1].entities == std::vector<TypedSpan>{{0, 0, 1}});
}

TEST_CASE("parse_bio errors") {
  CHECK(KindOf([] { Parse(""); }) == "EmptyInput");
  CHECK(KindOf([] { Parse("\n\n  \n"); }) == "EmptyInput");
  CHECK(KindOf([] { Parse("a O extra\n"); }) == "MalformedLine");
  CHECK(KindOf([] { Parse("a\n"); }) == "MalformedLine");
  CHECK(KindOf([] { Parse("a B_PER\n"); }) == "UnknownTag");
  CHECK(KindOf([] { Parse("a S-PER\n"); }) == "UnknownTag");
  CHECK(KindOf([] { Parse("a B-\n"); }) == "UnknownTag");
  BioOptions fixed;
  fixed.fixed_types = TypeInventory({"PER"});
  CHECK(KindOf([&] { Parse("a B-LOC\n", fixed); }) == "UnknownType");
}

TEST_CASE("malformed line errors cite the line number") {
  try {
    Parse("a O\nb O\n\nc O\nd O\ne O\nf O x\n");
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(std::string(e.what()).find("line 7") != std::string::npos);
  }
}

TEST_CASE("dangling I- tag: strict rejects, lenient repairs") {
  BioOptions strict;
  strict.strict = true;
  CHECK(KindOf([&] { Parse("X I-LOC\n", strict); }) == "DanglingInside");
  const Corpus c = Parse("X I-LOC\n");
  CHECK(c.sentences[0].entities == std::vector<TypedSpan>{{0, 0, 0}});
  // I-Y after B-X starts a new entity in lenient mode.
  const Corpus d = Parse("a B-X\nb I-Y\nc I-Y\n");
  CHECK(d.sentences[0].entities == std::vector<TypedSpan>{{0, 0, 0}, {1, 2, 1}});
}

TEST_CASE("bio and iob2 schemes parse identically") {
  const std::string text = "Tom B-PER\nlives O\nLos B-LOC\nAngeles I-LOC\n";
  BioOptions iob2;
  iob2.scheme = BioScheme::kIob2;
  CHECK(Parse(text) == Parse(text, iob2));
}

TEST_CASE("fixed inventory keeps its order") {
  BioOptions fixed;
  fixed.fixed_types = TypeInventory({"PER", "LOC"});
  const Corpus c = Parse("Tom B-PER\nlives O\nin O\nLos B-LOC\nAngeles I-LOC\n", fixed);
  CHECK(c.sentences[0] == TomSentence(0, 1));
}

TEST_CASE("emit_bio") {
  Corpus c;
  c.types = TypeInventory({"X"});
  c.sentences.push_back({Words("a b c"), {}});
  c.sentences.push_back({Words("p q"), {{0, 0, 0}, {1, 1, 0}}});
  const std::string text = Emit(c);
  CHECK(text == "a\tO\nb\tO\nc\tO\n\np\tB-X\nq\tB-X\n");
  CHECK(Parse(text, {.strict = true}) == c);

  const std::string tom = "Tom\tB-PER\nlives\tO\nin\tO\nLos\tB-LOC\nAngeles\tI-LOC\n";
  CHECK(Emit(Parse(tom)) == tom);
}

TEST_CASE("emit then parse is the identity on random corpora") {
  Rng rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    Corpus c;
    c.types = TypeInventory({"A", "B", "C"});
    const int n = 1 + static_cast<int>(rng.UniformInt(5));
    for (int i = 0; i < n; ++i) c.sentences.push_back(RandomSentence(rng, 3));
    BioOptions options;
    options.strict = true;
    options.fixed_types = c.types;
    CHECK(Parse(Emit(c), options) == c);
  }
}

TEST_CASE("parsed entities never overlap") {
  Rng rng(11);
  const std::vector<std::string> tags = {"O", "B-A", "I-A", "B-B", "I-B"};
  for (int trial = 0; trial < 300; ++trial) {
    std::string text;
    const int n = 1 + static_cast<int>(rng.UniformInt(15));
    for (int i = 0; i < n; ++i) text += "w " + tags[rng.UniformInt(tags.size())] + "\n";
    const Corpus c = Parse(text);
    const auto &e = c.sentences[0].entities;
    for (size_t i = 1; i < e.size(); ++i) CHECK(e[i - 1].end < e[i].start);
  }
}

TEST_CASE("all_spans") {
  CHECK(AllSpans(5).size() == 15);
  CHECK(AllSpans(5, 2).size() == 9);
  CHECK(AllSpans(1) == std::vector<Span>{{0, 0}});
  for (int n = 1; n <= 12; ++n) {
    for (int m = 1; m <= n; ++m) {
      const auto spans = AllSpans(n, m);
      CHECK(spans.size() == static_cast<size_t>(n * m - m * (m - 1) / 2));
      for (size_t i = 1; i < spans.size(); ++i) CHECK(spans[i - 1] < spans[i]);
      for (const Span &s : spans) CHECK(s.length() <= m);
    }
    CHECK(AllSpans(n).size() == static_cast<size_t>(n + n * (n - 1) / 2));
  }
}

TEST_CASE("sentence validation") {
  CHECK_NOTHROW(ValidateSentence(TomSentence(), 2));
  CHECK(KindOf([] { ValidateSentence(TomSentence(), 1); }) == "UnknownType");
  Sentence overlap = {Words("a b c"), {{0, 1, 0}, {1, 2, 0}}};
  CHECK(KindOf([&] { ValidateSentence(overlap, 1); }) == "OverlappingEntities");
  Sentence out_of_range = {Words("a b"), {{1, 2, 0}}};
  CHECK(KindOf([&] { ValidateSentence(out_of_range, 1); }) == "InvalidSpan");
}

TEST_CASE("type inventory") {
  CHECK(KindOf([] { TypeInventory({"A", "A"}); }) == "InvalidInventory");
  const TypeInventory t = TypeInventory::FromUnsorted({"PER", "LOC", "PER"});
  CHECK(t.names() == std::vector<std::string>{"LOC", "PER"});
  CHECK(t.Find("PER") == 1);
  CHECK_FALSE(t.Find("ORG").has_value());
}

TEST_CASE("corpus JSON-lines round trip") {
  Rng rng(3);
  Corpus c;
  c.types = TypeInventory({"A", "B"});
  c.split = Split::kTest;
  for (int i = 0; i < 50; ++i) c.sentences.push_back(RandomSentence(rng, 2, 10, true));
  std::stringstream buffer;
  WriteCorpusJsonl(c, buffer);
  CHECK(ReadCorpusJsonl(buffer, c.types, Split::kTest) == c);
}

TEST_CASE("entity overlap count and longest entity") {
  const Sentence s = TomSentence();
  CHECK(EntityOverlap(s, {0, 1}) == 1);
  CHECK(EntityOverlap(s, {2, 4}) == 2);
  CHECK(EntityOverlap(s, {1, 2}) == 0);
  CHECK(LongestEntity({s}) == 2);
  CHECK(LongestEntity({}) == 0);
}
