#ifndef FFFNER_TESTS_HELPERS_H_
#define FFFNER_TESTS_HELPERS_H_

#include <sstream>
#include <string>
#include <vector>

#include "fffner/corpus.h"
#include "fffner/rng.h"

namespace fffner::testing {

inline std::vector<std::string> Words(const std::string &text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

inline std::string Join(const std::vector<std::string> &tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) out += (i ? " " : "") + tokens[i];
  return out;
}

// Tom lives in Los Angeles, with PER = 0 and LOC = 1 unless remapped.
inline Sentence TomSentence(int per = 0, int loc = 1) {
  return {Words("Tom lives in Los Angeles"), {{0, 0, per}, {3, 4, loc}}};
}

// Random valid sentence: non-overlapping entities over `types` types. The
// token pool includes markup-looking strings on purpose.
inline Sentence RandomSentence(Rng &rng, int types, int max_len = 12,
                               bool awkward_tokens = false) {
  static const std::vector<std::string> plain = {
      "the", "a", "Paris", "Tom", "river", "Acme", "runs", "of", "in", "Los",
      "Angeles", ",", ".", "Jordan", "bank", "x"};
  static const std::vector<std::string> awkward = {
      "[", "]", "|", "\\[", "\\", "\\\\]", "<mask>", "B-PER", "O", "{}", "\"q\"",
      "naïve"};
  Sentence s;
  const int n = 1 + static_cast<int>(rng.UniformInt(max_len));
  for (int i = 0; i < n; ++i) {
    if (awkward_tokens && rng.Bernoulli(0.3)) {
      s.tokens.push_back(awkward[rng.UniformInt(awkward.size())]);
    } else {
      s.tokens.push_back(plain[rng.UniformInt(plain.size())]);
    }
  }
  int pos = 0;
  while (pos < n) {
    if (rng.Bernoulli(0.3)) {
      const int len = 1 + static_cast<int>(rng.UniformInt(3));
      const int end = std::min(n - 1, pos + len - 1);
      s.entities.push_back({pos, end, static_cast<int>(rng.UniformInt(types))});
      pos = end + 1;
    } else {
      ++pos;
    }
  }
  return s;
}

}  // namespace fffner::testing

#endif  // FFFNER_TESTS_HELPERS_H_
