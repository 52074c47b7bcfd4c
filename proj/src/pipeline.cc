#include "fffner/pipeline.h"

#include <fstream>
#include <mutex>
#include <thread>

#include "fffner/error.h"
#include "fffner/predict.h"
#include "fffner/pretrain.h"
#include "fffner/rng.h"

namespace fffner {
namespace {

bool EndsWith(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

Json RunConfigToJson(const RunConfig &cfg) {
  const EncoderConfig &e = cfg.encoder;
  return {
      {"k_shots", cfg.k_shots},
      {"folds", cfg.folds},
      {"first_fold", cfg.first_fold},
      {"seed", cfg.seed},
      {"variant", VariantName(cfg.variant)},
      {"alpha", cfg.alpha},
      {"entity_token_ratio", cfg.entity_token_ratio},
      {"epochs", cfg.epochs},
      {"batch_size", cfg.batch_size},
      {"learning_rate", cfg.learning_rate},
      {"weight_decay", cfg.weight_decay},
      {"max_span_len", cfg.max_span_len ? Json(*cfg.max_span_len) : Json(nullptr)},
      {"pretrain_steps", cfg.pretrain_steps},
      {"pretrain_batch_size", cfg.pretrain_batch_size},
      {"pretrain_learning_rate", cfg.pretrain_learning_rate},
      {"encoder",
       {{"dim", e.dim}, {"layers", e.layers}, {"heads", e.heads},
        {"ffn_dim", e.ffn_dim}, {"max_len", e.max_len},
        {"dropout", e.dropout}, {"init_std", e.init_std}}},
      {"episode_files", cfg.episode_files},
      {"restarts", cfg.restarts},
      {"jobs", cfg.jobs},
  };
}

RunConfig RunConfigFromJson(const Json &j) {
  RunConfig cfg;
  try {
    cfg.k_shots = j.at("k_shots").get<int>();
    cfg.folds = j.at("folds").get<int>();
    cfg.first_fold = j.at("first_fold").get<int>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.variant = ParseVariant(j.at("variant").get<std::string>());
    cfg.alpha = j.at("alpha").get<double>();
    cfg.entity_token_ratio = j.at("entity_token_ratio").get<double>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.learning_rate = j.at("learning_rate").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    if (!j.at("max_span_len").is_null()) {
      cfg.max_span_len = j.at("max_span_len").get<int>();
    }
    cfg.pretrain_steps = j.at("pretrain_steps").get<int>();
    cfg.pretrain_batch_size = j.at("pretrain_batch_size").get<int>();
    cfg.pretrain_learning_rate = j.at("pretrain_learning_rate").get<double>();
    const Json &e = j.at("encoder");
    cfg.encoder.dim = e.at("dim").get<int>();
    cfg.encoder.layers = e.at("layers").get<int>();
    cfg.encoder.heads = e.at("heads").get<int>();
    cfg.encoder.ffn_dim = e.at("ffn_dim").get<int>();
    cfg.encoder.max_len = e.at("max_len").get<int>();
    cfg.encoder.dropout = e.at("dropout").get<double>();
    cfg.encoder.init_std = e.at("init_std").get<double>();
    cfg.episode_files = j.at("episode_files").get<std::vector<std::string>>();
    cfg.restarts = j.at("restarts").get<int>();
    cfg.jobs = j.at("jobs").get<int>();
  } catch (const Json::exception &e) {
    throw DataError("SchemaMismatch", std::string("run config: ") + e.what());
  }
  return cfg;
}

ModelParams PrepareBackbone(const Corpus &train, const RunConfig &cfg) {
  EncoderConfig encoder = cfg.encoder;
  encoder.type_classes = TypeHeadWidth(cfg.variant, train.types.size());
  ModelParams params =
      InitModel(encoder, Vocabulary::Build(train.sentences), cfg.seed);
  if (cfg.pretrain_steps > 0) {
    MlmConfig mlm;
    mlm.steps = cfg.pretrain_steps;
    mlm.batch_size = cfg.pretrain_batch_size;
    mlm.learning_rate = cfg.pretrain_learning_rate;
    mlm.weight_decay = cfg.weight_decay;
    mlm.seed = DeriveSeed(cfg.seed, {0x505245ULL});
    MlmPretrain(train.sentences, mlm, &params);
  }
  return params;
}

FoldOutcome RunFold(const Corpus &train, const Corpus &test,
                    const RunConfig &cfg, const ModelParams &backbone,
                    int fold_id) {
  FoldOutcome outcome;
  const int fold_index = fold_id - cfg.first_fold;
  if (!cfg.episode_files.empty()) {
    if (fold_index < 0 ||
        fold_index >= static_cast<int>(cfg.episode_files.size())) {
      throw UsageError("MissingEpisode",
                       "no episode file for fold " + std::to_string(fold_id));
    }
    outcome.episode = LoadEpisodeFile(cfg.episode_files[fold_index]);
    if (!(outcome.episode.types == train.types)) {
      throw DataError("UnknownType", "episode inventory differs from corpus");
    }
  } else {
    outcome.episode = SampleEpisode(train, {cfg.k_shots, cfg.seed, fold_id});
  }
  const Episode &episode = outcome.episode;
  const MaxSpanLen max_span_len =
      cfg.max_span_len ? cfg.max_span_len
                       : MaxSpanLen(LongestEntity(episode.train_sentences) + 2);
  const int width = TypeHeadWidth(cfg.variant, episode.types.size());

  for (int attempt = 0; attempt <= cfg.restarts; ++attempt) {
    const uint64_t seed = DeriveSeed(cfg.seed, {static_cast<uint64_t>(fold_id),
                                                static_cast<uint64_t>(attempt)});
    ModelParams params = backbone;
    ResetHeads(&params, width, seed);

    TrainConfig train_cfg;
    train_cfg.epochs = cfg.epochs;
    train_cfg.batch_size = cfg.batch_size;
    train_cfg.learning_rate = cfg.learning_rate;
    train_cfg.weight_decay = cfg.weight_decay;
    train_cfg.seed = seed;
    train_cfg.variant = cfg.variant;
    train_cfg.sampler.alpha = cfg.alpha;
    train_cfg.sampler.entity_token_ratio = cfg.entity_token_ratio;
    train_cfg.sampler.max_span_len = max_span_len;
    train_cfg.sampler.seed = seed;

    outcome.attempts = attempt + 1;
    try {
      outcome.stats = Train(episode, train_cfg, &params);
    } catch (const DivergenceError &e) {
      outcome.error = e.what();
      continue;
    }
    outcome.error.clear();
    outcome.predictions =
        PredictCorpus(params, test, {cfg.variant, max_span_len});
    outcome.score = SpanF1(test, outcome.predictions, fold_id);
    return outcome;
  }
  outcome.score.fold_id = fold_id;
  outcome.score.diverged = true;
  return outcome;
}

RunResult RunExperiment(const Corpus &train, const Corpus &test,
                        const RunConfig &cfg, const ModelParams *backbone) {
  if (cfg.folds < 1) throw UsageError("InvalidFolds", "folds must be >= 1");
  if (!(train.types == test.types)) {
    throw DataError("UnknownType", "train and test inventories differ");
  }
  std::optional<ModelParams> owned;
  if (backbone == nullptr) {
    owned = PrepareBackbone(train, cfg);
    backbone = &*owned;
  }

  RunResult result;
  result.folds.resize(cfg.folds);
  std::vector<std::exception_ptr> errors(cfg.folds);
  auto run = [&](int index) {
    try {
      result.folds[index] =
          RunFold(train, test, cfg, *backbone, cfg.first_fold + index);
    } catch (...) {
      errors[index] = std::current_exception();
    }
  };
  const int jobs = std::max(1, std::min(cfg.jobs, cfg.folds));
  if (jobs == 1) {
    for (int i = 0; i < cfg.folds; ++i) run(i);
  } else {
    std::vector<std::thread> workers;
    for (int t = 0; t < jobs; ++t) {
      workers.emplace_back([&, t] {
        for (int i = t; i < cfg.folds; i += jobs) run(i);
      });
    }
    for (std::thread &w : workers) w.join();
  }
  for (const std::exception_ptr &e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<FoldScore> scores;
  bool any_completed = false;
  for (const FoldOutcome &f : result.folds) {
    scores.push_back(f.score);
    any_completed = any_completed || !f.score.diverged;
  }
  if (!any_completed) throw DivergenceError(cfg.epochs, "every fold diverged");
  result.report = Aggregate(std::move(scores));
  return result;
}

std::string_view SweepParameterName(SweepParameter parameter) {
  return parameter == SweepParameter::kAlpha ? "alpha" : "k";
}

SweepParameter ParseSweepParameter(std::string_view name) {
  if (name == "alpha") return SweepParameter::kAlpha;
  if (name == "k" || name == "k_shots") return SweepParameter::kShots;
  throw UsageError("UnknownSweepParameter", std::string(name));
}

std::vector<SweepPoint> RunSweep(const Corpus &train, const Corpus &test,
                                 const RunConfig &base, SweepParameter parameter,
                                 const std::vector<double> &values,
                                 const ModelParams *backbone) {
  if (values.empty()) throw UsageError("EmptyGrid", "sweep needs values");
  std::optional<ModelParams> owned;
  if (backbone == nullptr) {
    owned = PrepareBackbone(train, base);
    backbone = &*owned;
  }
  std::vector<SweepPoint> points;
  for (double value : values) {
    RunConfig cfg = base;
    if (parameter == SweepParameter::kAlpha) {
      cfg.alpha = value;
    } else {
      cfg.k_shots = static_cast<int>(value);
      if (cfg.k_shots != value || cfg.k_shots < 1) {
        throw UsageError("InvalidGrid", "shots must be positive integers");
      }
    }
    points.push_back({value, RunExperiment(train, test, cfg, backbone)});
  }
  return points;
}

namespace {

std::string FormatValue(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%g", value);
  return buffer;
}

}  // namespace

void WriteSweepTableCsv(SweepParameter parameter,
                        const std::vector<SweepPoint> &points,
                        std::ostream &out) {
  out << "parameter,value,mean_f1,std_f1,folds\n";
  for (const SweepPoint &p : points) {
    const EvalReport &r = p.result.report;
    out << SweepParameterName(parameter) << ',' << FormatValue(p.value) << ','
        << FormatFixed(r.mean_f1) << ','
        << (r.std_f1 ? FormatFixed(*r.std_f1) : "") << ',' << r.fold_count
        << '\n';
  }
}

void WriteSweepLongCsv(SweepParameter parameter,
                       const std::vector<SweepPoint> &points,
                       std::ostream &out) {
  out << "parameter,value,fold_id,precision,recall,f1,gold,predicted,correct\n";
  for (const SweepPoint &p : points) {
    for (const FoldScore &f : p.result.report.folds) {
      out << SweepParameterName(parameter) << ',' << FormatValue(p.value) << ','
          << f.fold_id << ',';
      if (f.diverged) {
        out << "diverged,,,,,\n";
        continue;
      }
      out << FormatFixed(f.precision) << ',' << FormatFixed(f.recall) << ','
          << FormatFixed(f.f1) << ',' << f.counts.gold << ','
          << f.counts.predicted << ',' << f.counts.correct << '\n';
    }
  }
}

Corpus LoadCorpusFile(const std::string &path, const BioOptions &options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("IoError", "cannot read " + path);
  if (EndsWith(path, ".jsonl")) {
    return ReadCorpusJsonl(in, options.fixed_types, options.split);
  }
  return ParseBio(in, options);
}

void SaveCorpusFile(const Corpus &corpus, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("IoError", "cannot write " + path);
  if (EndsWith(path, ".jsonl")) {
    WriteCorpusJsonl(corpus, out);
  } else {
    EmitBio(corpus, out);
  }
}

}  // namespace fffner
