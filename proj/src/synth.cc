#include "fffner/synth.h"

#include <algorithm>
#include <array>
#include <sstream>
#include <string>
#include <vector>

#include "fffner/error.h"
#include "fffner/rng.h"

namespace fffner {
namespace {

// Type slots, in the order types are enabled: N types uses the first N.
constexpr std::array<const char *, kMaxSyntheticTypes> kTypeNames = {
    "PER", "LOC", "ORG", "MISC", "PROD", "EVENT"};

using Lexicon = std::vector<std::string>;

const Lexicon kFirstNames = {"John",  "Mary",   "Jordan", "Paris",  "Ahmed",
                             "Elena", "Carlos", "Yuki",   "Peter",  "Grace",
                             "Omar",  "Linda",  "Victor", "Sofia",  "Martin",
                             "Helen"};
const Lexicon kLastNames = {"Smith",   "Washington", "Lincoln", "Garcia",
                            "Chen",    "Kowalski",   "Dubois",  "Tanaka",
                            "Murphy",  "Jackson",    "Berg",    "Rossi",
                            "Okafor",  "Madison",    "Nguyen",  "Fischer"};
const Lexicon kCities = {"Boston",  "Chicago", "Denver",  "Paris",   "Jordan",
                         "Washington", "Lincoln", "Madrid", "Cairo", "Oslo",
                         "Lima",    "Dublin",  "Madison", "Tokyo",  "Berlin",
                         "Nairobi", "New York", "Los Angeles", "San Diego",
                         "Hong Kong", "Buenos Aires", "Rio de Janeiro"};
const Lexicon kOrgStems = {"Apex",   "Boston",  "Lincoln", "Summit", "Orion",
                           "Delta",  "Chicago", "Falcon",  "Nova",   "Jackson",
                           "Pioneer", "Atlas"};
const Lexicon kOrgSuffixes = {"Corp", "Bank", "Group", "Motors", "Airlines",
                              "Times", "Holdings"};
const Lexicon kMisc = {"French", "German", "Olympic Games", "World Cup",
                       "Chinese", "Brazilian", "Paris Marathon", "Nobel Prize",
                       "Jordanian", "Irish", "Tour de France", "Swedish"};
const Lexicon kProductBrands = {"Falcon", "Nova", "Apex", "Orion", "Galaxy",
                                "Pixel", "Atlas", "Comet"};
const Lexicon kProductModels = {"9", "X", "Pro", "Max", "2", "Ultra", "Mini"};
const Lexicon kEventStems = {"Boston", "Chicago", "Berlin", "Tokyo", "Summer",
                             "Spring", "Dublin", "Lima"};
const Lexicon kEventKinds = {"Summit", "Festival", "Conference", "Expo",
                             "Marathon", "Forum"};
const Lexicon kDays = {"Monday", "Tuesday", "Wednesday", "Thursday", "Friday"};

// Entity surface for a type slot.
std::string EntityText(const std::string &type, Rng &rng) {
  auto pick = [&rng](const Lexicon &lex) -> const std::string & {
    return lex[rng.UniformInt(lex.size())];
  };
  if (type == "PER") {
    const double u = rng.Uniform();
    if (u < 0.6) return pick(kFirstNames) + " " + pick(kLastNames);
    if (u < 0.8) return pick(kLastNames);
    return pick(kFirstNames);
  }
  if (type == "LOC") return pick(kCities);
  if (type == "ORG") {
    if (rng.Uniform() < 0.2) return "Bank of " + pick(kCities);
    return pick(kOrgStems) + " " + pick(kOrgSuffixes);
  }
  if (type == "MISC") return pick(kMisc);
  if (type == "PROD") return pick(kProductBrands) + " " + pick(kProductModels);
  return pick(kEventStems) + " " + pick(kEventKinds);
}

// Templates with {TYPE} slots; a template is usable when all its slot types
// are enabled. Entity-free sentences come from kFillers.
const std::vector<std::string> kTemplates = {
    "{PER} said on {DAY} that the plan would work .",
    "the report was written by {PER} last week .",
    "{PER} , a spokesman for the group , declined to comment .",
    "officials said {PER} will return to work next month .",
    "according to {PER} , the talks were very productive .",
    "heavy rain fell across {LOC} on {DAY} night .",
    "the team flew to {LOC} for the final match .",
    "prices rose sharply in {LOC} this year , officials said .",
    "thousands of people gathered in the streets of {LOC} .",
    "shares of {ORG} fell 3 percent in early trading .",
    "{ORG} reported higher profits for the third quarter .",
    "the deal was approved by {ORG} on {DAY} .",
    "analysts expect {ORG} to cut more jobs soon .",
    "the {MISC} delegation welcomed the decision on {DAY} .",
    "she won a gold medal at the {MISC} last summer .",
    "fans celebrated after the {MISC} final ended .",
    "{PER} moved to {LOC} after the war ended .",
    "{PER} joined {ORG} as chief executive in May .",
    "{ORG} opened a new office in {LOC} last year .",
    "{PER} spoke to {MISC} reporters on {DAY} .",
    "the new {PROD} went on sale on {DAY} .",
    "critics praised the battery life of the {PROD} .",
    "{ORG} will ship the {PROD} next month .",
    "more than ten thousand visitors attended the {EVENT} .",
    "the {EVENT} was postponed because of the storm .",
    "{PER} gave the opening speech at the {EVENT} .",
};

const std::vector<std::string> kFillers = {
    "the meeting ended without an agreement .",
    "officials said the results would be announced later .",
    "the weather is expected to improve by the weekend .",
    "the committee will meet again next week to discuss the budget .",
    "no further details were given .",
};

std::vector<std::string> SlotTypes(const std::string &pattern) {
  std::vector<std::string> slots;
  size_t pos = 0;
  while ((pos = pattern.find('{', pos)) != std::string::npos) {
    const size_t close = pattern.find('}', pos);
    const std::string name = pattern.substr(pos + 1, close - pos - 1);
    if (name != "DAY") slots.push_back(name);
    pos = close + 1;
  }
  return slots;
}

std::vector<std::string> Words(const std::string &text) {
  std::vector<std::string> words;
  std::istringstream in(text);
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

}  // namespace

Corpus GenerateSynthetic(const SynthConfig &config) {
  if (config.types < 2 || config.types > kMaxSyntheticTypes) {
    throw UsageError("InvalidSynthConfig",
                     "types must be in [2, " +
                         std::to_string(kMaxSyntheticTypes) + "]");
  }
  if (config.sentences < 100) {
    throw UsageError("InvalidSynthConfig", "sentences must be >= 100");
  }
  std::vector<std::string> enabled(kTypeNames.begin(),
                                   kTypeNames.begin() + config.types);
  Corpus corpus;
  corpus.types = TypeInventory::FromUnsorted(enabled);

  // Usable templates, grouped by the first slot type so every type gets an
  // even share of sentences.
  std::vector<std::vector<const std::string *>> by_type(config.types);
  for (const std::string &t : kTemplates) {
    const std::vector<std::string> slots = SlotTypes(t);
    const bool usable = std::all_of(slots.begin(), slots.end(), [&](auto &s) {
      return std::find(enabled.begin(), enabled.end(), s) != enabled.end();
    });
    if (!usable) continue;
    for (const std::string &s : slots) {
      const auto index = std::find(enabled.begin(), enabled.end(), s) - enabled.begin();
      by_type[index].push_back(&t);
    }
  }

  Rng rng(config.seed, {0x53594e5448ULL});
  for (int i = 0; i < config.sentences; ++i) {
    const std::string *pattern;
    if (rng.Uniform() < 0.1) {
      pattern = &kFillers[rng.UniformInt(kFillers.size())];
    } else {
      const auto &pool = by_type[rng.UniformInt(by_type.size())];
      pattern = pool[rng.UniformInt(pool.size())];
    }
    Sentence sentence;
    size_t pos = 0;
    const std::string &text = *pattern;
    while (pos < text.size()) {
      const size_t open = text.find('{', pos);
      for (std::string &w : Words(text.substr(pos, open == std::string::npos
                                                       ? std::string::npos
                                                       : open - pos))) {
        sentence.tokens.push_back(std::move(w));
      }
      if (open == std::string::npos) break;
      const size_t close = text.find('}', open);
      const std::string slot = text.substr(open + 1, close - open - 1);
      if (slot == "DAY") {
        sentence.tokens.push_back(kDays[rng.UniformInt(kDays.size())]);
      } else {
        const int start = sentence.size();
        for (std::string &w : Words(EntityText(slot, rng))) {
          sentence.tokens.push_back(std::move(w));
        }
        sentence.entities.push_back(
            {start, sentence.size() - 1, *corpus.types.Find(slot)});
      }
      pos = close + 1;
    }
    corpus.sentences.push_back(std::move(sentence));
  }
  return corpus;
}

double TokenEntityRatio(const Corpus &corpus) {
  size_t tokens = 0;
  size_t entities = 0;
  for (const Sentence &s : corpus.sentences) {
    tokens += s.tokens.size();
    entities += s.entities.size();
  }
  return entities == 0 ? 0.0
                       : static_cast<double>(tokens) / static_cast<double>(entities);
}

}  // namespace fffner
