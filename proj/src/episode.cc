#include "fffner/episode.h"

#include <algorithm>
#include <fstream>

#include "fffner/error.h"
#include "fffner/json_io.h"
#include "fffner/rng.h"

namespace fffner {
namespace {

constexpr const char *kEpisodeFormat = "fffner-episode";
constexpr int kEpisodeVersion = 1;

bool Mentions(const Sentence &sentence, int type_id) {
  return std::any_of(sentence.entities.begin(), sentence.entities.end(),
                     [&](const TypedSpan &e) { return e.type_id == type_id; });
}

}  // namespace

Episode SampleEpisode(const Corpus &corpus, const EpisodeSpec &spec) {
  if (spec.k_shots < 1) throw UsageError("InvalidShots", "K must be >= 1");
  if (corpus.types.size() < 1) {
    throw DataError("EmptyInventory", "corpus has no entity types");
  }
  Rng rng(spec.seed, {0x45504953ULL, static_cast<uint64_t>(spec.fold_id)});
  std::vector<bool> taken(corpus.sentences.size(), false);

  Episode episode;
  episode.types = corpus.types;
  episode.spec = spec;
  for (int type = 0; type < corpus.types.size(); ++type) {
    std::vector<size_t> pool;
    for (size_t i = 0; i < corpus.sentences.size(); ++i) {
      if (!taken[i] && Mentions(corpus.sentences[i], type)) pool.push_back(i);
    }
    if (static_cast<int>(pool.size()) < spec.k_shots) {
      throw DataError("InsufficientSupport",
                      "type '" + corpus.types.name(type) + "' has " +
                          std::to_string(pool.size()) +
                          " available sentences, need " +
                          std::to_string(spec.k_shots));
    }
    // Partial Fisher-Yates: the first K slots become a uniform sample.
    for (int k = 0; k < spec.k_shots; ++k) {
      const size_t j = k + rng.UniformInt(pool.size() - k);
      std::swap(pool[k], pool[j]);
      taken[pool[k]] = true;
      episode.train_sentences.push_back(corpus.sentences[pool[k]]);
    }
  }
  return episode;
}

void ValidateEpisode(const Episode &episode) {
  if (episode.train_sentences.empty()) {
    throw DataError("EmptyEpisode", "episode has no sentences");
  }
  for (const Sentence &s : episode.train_sentences) {
    ValidateSentence(s, episode.types.size());
  }
  for (int type = 0; type < episode.types.size(); ++type) {
    const auto support = std::count_if(
        episode.train_sentences.begin(), episode.train_sentences.end(),
        [&](const Sentence &s) { return Mentions(s, type); });
    if (support < episode.spec.k_shots) {
      throw DataError("InsufficientSupport",
                      "episode has " + std::to_string(support) +
                          " sentences for type '" + episode.types.name(type) +
                          "'");
    }
  }
}

void SaveEpisode(const Episode &episode, std::ostream &out) {
  Json header = {{"format", kEpisodeFormat},
                 {"version", kEpisodeVersion},
                 {"k_shots", episode.spec.k_shots},
                 {"seed", episode.spec.seed},
                 {"fold_id", episode.spec.fold_id},
                 {"types", episode.types.names()}};
  out << header.dump() << '\n';
  for (const Sentence &s : episode.train_sentences) {
    out << SentenceToJson(s, episode.types).dump() << '\n';
  }
}

Episode LoadEpisode(std::istream &in) {
  std::string line;
  int line_number = 0;
  Episode episode;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    Json object = ParseJsonLine(line, line_number);
    if (!have_header) {
      if (!object.is_object() || object.value("format", "") != kEpisodeFormat ||
          !object.contains("types") || !object["types"].is_array() ||
          !object.contains("k_shots") || !object.contains("seed") ||
          !object.contains("fold_id")) {
        throw DataError("SchemaMismatch", "missing or invalid episode header");
      }
      if (object.value("version", 0) != kEpisodeVersion) {
        throw DataError("SchemaMismatch", "unsupported episode version");
      }
      try {
        episode.types = TypeInventory(object["types"].get<std::vector<std::string>>());
        episode.spec.k_shots = object["k_shots"].get<int>();
        episode.spec.seed = object["seed"].get<uint64_t>();
        episode.spec.fold_id = object["fold_id"].get<int>();
      } catch (const Json::exception &e) {
        throw DataError("SchemaMismatch", std::string("episode header: ") + e.what());
      }
      have_header = true;
      continue;
    }
    episode.train_sentences.push_back(SentenceFromJson(object, episode.types));
  }
  if (!have_header) throw DataError("EmptyEpisode", "empty episode file");
  if (episode.train_sentences.empty()) {
    throw DataError("EmptyEpisode", "episode has no sentences");
  }
  return episode;
}

void SaveEpisodeFile(const Episode &episode, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("IoError", "cannot write " + path);
  SaveEpisode(episode, out);
}

Episode LoadEpisodeFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("IoError", "cannot read " + path);
  return LoadEpisode(in);
}

}  // namespace fffner
