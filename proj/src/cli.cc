#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "fffner/error.h"
#include "fffner/formulate.h"
#include "fffner/pipeline.h"
#include "fffner/predict.h"
#include "fffner/synth.h"

namespace fffner {
namespace {

namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

std::string Env(const std::string &flag) {
  std::string name = "FFFNER_";
  for (char c : flag) name += c == '-' ? '_' : static_cast<char>(std::toupper(c));
  return name;
}

std::vector<std::string> SplitCommas(const std::string &text) {
  std::vector<std::string> parts;
  std::stringstream in(text);
  std::string part;
  while (std::getline(in, part, ',')) {
    if (!part.empty()) parts.push_back(part);
  }
  return parts;
}

std::vector<double> ParseGrid(const std::string &text) {
  std::vector<double> values;
  for (const std::string &p : SplitCommas(text)) {
    try {
      size_t used = 0;
      values.push_back(std::stod(p, &used));
      if (used != p.size()) throw std::invalid_argument(p);
    } catch (const std::exception &) {
      throw UsageError("InvalidGrid", "not a number: " + p);
    }
  }
  return values;
}

std::string Num(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  return out.str();
}

void WriteJsonFile(const Json &json, const fs::path &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("IoError", "cannot write " + path.string());
  out << json.dump(2) << '\n';
}

// Options shared by `run` and `sweep`. Every value is materialized into the
// manifest so a replay does not depend on the environment.
struct RunOptions {
  RunConfig cfg;
  std::string train_path;
  std::string test_path;
  std::string variant = "fff";
  int max_span_len = 0;  // 0: derive from the episode
  std::string episode_files;
  bool strict = false;
  std::string out;
};

void AddRunOptions(CLI::App *cmd, RunOptions &o) {
  auto opt = [&](const std::string &flag, auto &target, const std::string &help) {
    return cmd->add_option("--" + flag, target, help)->envname(Env(flag));
  };
  opt("train", o.train_path, "Training corpus (BIO or .jsonl)")->required();
  opt("test", o.test_path, "Test corpus (BIO or .jsonl)")->required();
  opt("out", o.out, "Output directory")->required();
  opt("k", o.cfg.k_shots, "Shots per entity type")->capture_default_str();
  opt("folds", o.cfg.folds, "Number of folds")->capture_default_str();
  opt("first-fold", o.cfg.first_fold, "Id of the first fold")->capture_default_str();
  opt("seed", o.cfg.seed, "Base random seed")->capture_default_str();
  opt("fold", o.cfg.first_fold, "Alias of --first-fold");
  opt("variant", o.variant,
      "fff, not_mask, no_brackets or span_type_together")
      ->capture_default_str();
  opt("alpha", o.cfg.alpha, "Negative sampling multiplier")->capture_default_str();
  opt("entity-token-ratio", o.cfg.entity_token_ratio,
      "Virtual tokens per gold entity in the negative budget")
      ->capture_default_str();
  opt("epochs", o.cfg.epochs, "Fine-tuning epochs")->capture_default_str();
  opt("batch-size", o.cfg.batch_size, "Fine-tuning batch size")->capture_default_str();
  opt("lr", o.cfg.learning_rate, "Fine-tuning learning rate")->capture_default_str();
  opt("weight-decay", o.cfg.weight_decay, "AdamW weight decay")->capture_default_str();
  opt("max-span-len", o.max_span_len,
      "Longest span considered (0: longest episode entity + 2)")
      ->capture_default_str();
  opt("pretrain-steps", o.cfg.pretrain_steps,
      "Masked-token pretraining steps on the training text (0 disables)")
      ->capture_default_str();
  opt("pretrain-batch-size", o.cfg.pretrain_batch_size, "Pretraining batch size")
      ->capture_default_str();
  opt("pretrain-lr", o.cfg.pretrain_learning_rate, "Pretraining learning rate")
      ->capture_default_str();
  opt("dim", o.cfg.encoder.dim, "Encoder width")->capture_default_str();
  opt("layers", o.cfg.encoder.layers, "Encoder depth")->capture_default_str();
  opt("heads", o.cfg.encoder.heads, "Attention heads")->capture_default_str();
  opt("ffn-dim", o.cfg.encoder.ffn_dim, "Feed-forward width")->capture_default_str();
  opt("max-len", o.cfg.encoder.max_len, "Positional capacity")->capture_default_str();
  opt("dropout", o.cfg.encoder.dropout, "Dropout probability")->capture_default_str();
  opt("episode-file", o.episode_files,
      "Comma-separated episode files, one per fold (overrides sampling)");
  opt("restarts", o.cfg.restarts, "Retries with a new seed after divergence")
      ->capture_default_str();
  opt("jobs", o.cfg.jobs, "Folds trained concurrently")->capture_default_str();
  cmd->add_flag("--strict", o.strict, "Reject dangling I- tags")->envname(Env("strict"));
}

void FinishRunOptions(RunOptions &o) {
  o.cfg.variant = ParseVariant(o.variant);
  if (o.cfg.variant == Variant::kGenre || o.cfg.variant == Variant::kTanl) {
    throw UsageError("InvalidVariant", "run needs a span-classification variant");
  }
  if (o.max_span_len < 0) throw UsageError("InvalidSpanLength", "max-span-len >= 0");
  if (o.max_span_len > 0) o.cfg.max_span_len = o.max_span_len;
  o.cfg.episode_files = SplitCommas(o.episode_files);
  if (!o.cfg.episode_files.empty() &&
      static_cast<int>(o.cfg.episode_files.size()) != o.cfg.folds) {
    throw UsageError("EpisodeCount", "need one episode file per fold");
  }
}

std::vector<std::string> RunArgs(const RunOptions &o) {
  const RunConfig &c = o.cfg;
  std::vector<std::string> args = {
      "--train", o.train_path, "--test", o.test_path, "--out", o.out,
      "--k", std::to_string(c.k_shots), "--folds", std::to_string(c.folds),
      "--first-fold", std::to_string(c.first_fold),
      "--seed", std::to_string(c.seed), "--variant", o.variant,
      "--alpha", Num(c.alpha), "--entity-token-ratio", Num(c.entity_token_ratio),
      "--epochs", std::to_string(c.epochs),
      "--batch-size", std::to_string(c.batch_size),
      "--lr", Num(c.learning_rate), "--weight-decay", Num(c.weight_decay),
      "--max-span-len", std::to_string(o.max_span_len),
      "--pretrain-steps", std::to_string(c.pretrain_steps),
      "--pretrain-batch-size", std::to_string(c.pretrain_batch_size),
      "--pretrain-lr", Num(c.pretrain_learning_rate),
      "--dim", std::to_string(c.encoder.dim),
      "--layers", std::to_string(c.encoder.layers),
      "--heads", std::to_string(c.encoder.heads),
      "--ffn-dim", std::to_string(c.encoder.ffn_dim),
      "--max-len", std::to_string(c.encoder.max_len),
      "--dropout", Num(c.encoder.dropout),
      "--restarts", std::to_string(c.restarts),
      "--jobs", std::to_string(c.jobs)};
  if (!o.episode_files.empty()) {
    args.insert(args.end(), {"--episode-file", o.episode_files});
  }
  if (o.strict) args.push_back("--strict");
  return args;
}

struct Manifest {
  std::string command;
  std::vector<std::string> args;
  Json config = Json::object();
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
};

void WriteManifest(const Manifest &m, double wall_seconds, const fs::path &path) {
  Json json = {{"tool", "fffner"},
               {"version", kToolVersion},
               {"command", m.command},
               {"args", m.args},
               {"config", m.config},
               {"inputs", m.inputs},
               {"outputs", m.outputs},
               {"wall_seconds", wall_seconds}};
  WriteJsonFile(json, path);
}

std::pair<Corpus, Corpus> LoadTrainTest(const RunOptions &o) {
  BioOptions options;
  options.strict = o.strict;
  Corpus train = LoadCorpusFile(o.train_path, options);
  options.fixed_types = train.types;
  options.split = Split::kTest;
  Corpus test = LoadCorpusFile(o.test_path, options);
  return {std::move(train), std::move(test)};
}

void WriteFoldArtifacts(const RunResult &result, const TypeInventory &types,
                        const fs::path &dir, std::vector<std::string> *outputs) {
  for (const FoldOutcome &fold : result.folds) {
    const std::string id = std::to_string(fold.score.fold_id);
    const fs::path episode = dir / ("episode_fold" + id + ".jsonl");
    SaveEpisodeFile(fold.episode, episode.string());
    outputs->push_back(episode.string());
    if (fold.score.diverged) continue;
    const fs::path predictions = dir / ("predictions_fold" + id + ".jsonl");
    std::ofstream p(predictions, std::ios::binary);
    WritePredictionsJsonl(fold.predictions, types, p);
    const fs::path stats = dir / ("train_stats_fold" + id + ".jsonl");
    std::ofstream s(stats, std::ios::binary);
    WriteTrainStatsJsonl(fold.stats, s);
    outputs->push_back(predictions.string());
    outputs->push_back(stats.string());
  }
}

// ---------------------------------------------------------------------------

int Dispatch(const std::vector<std::string> &args);

int CmdReplay(const std::string &manifest_path, const std::string &out) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw DataError("IoError", "cannot read " + manifest_path);
  Json manifest;
  try {
    manifest = Json::parse(in);
  } catch (const Json::exception &e) {
    throw DataError("SchemaMismatch", std::string("manifest: ") + e.what());
  }
  if (!manifest.contains("command") || !manifest.contains("args")) {
    throw DataError("SchemaMismatch", "manifest lacks command/args");
  }
  std::vector<std::string> args = {manifest["command"].get<std::string>()};
  for (const Json &a : manifest["args"]) args.push_back(a.get<std::string>());
  if (!out.empty()) {
    for (size_t i = 1; i + 1 < args.size(); ++i) {
      if (args[i] == "--out") args[i + 1] = out;
    }
  }
  return Dispatch(args);
}

int Dispatch(const std::vector<std::string> &args) {
  CLI::App app{"Few-shot named entity recognition by span formulation"};
  app.require_subcommand(1);
  const auto started = std::chrono::steady_clock::now();
  Manifest manifest;
  fs::path manifest_path;
  std::function<void()> action;

  // synth ------------------------------------------------------------------
  SynthConfig synth;
  std::string synth_out;
  auto *cmd_synth = app.add_subcommand("synth", "Generate a synthetic BIO corpus");
  cmd_synth->add_option("--types", synth.types, "Entity types (2-6)")
      ->capture_default_str()->envname(Env("types"));
  cmd_synth->add_option("--sentences", synth.sentences, "Sentence count (>= 100)")
      ->capture_default_str()->envname(Env("sentences"));
  cmd_synth->add_option("--seed", synth.seed, "Random seed")
      ->capture_default_str()->envname(Env("seed"));
  cmd_synth->add_option("--out", synth_out, "Output file (BIO, or .jsonl)")->required();
  cmd_synth->callback([&] {
    action = [&] {
      const Corpus corpus = GenerateSynthetic(synth);
      SaveCorpusFile(corpus, synth_out);
      manifest.command = "synth";
      manifest.args = {"--types", std::to_string(synth.types), "--sentences",
                       std::to_string(synth.sentences), "--seed",
                       std::to_string(synth.seed), "--out", synth_out};
      manifest.config = {{"types", synth.types},
                         {"sentences", synth.sentences},
                         {"seed", synth.seed},
                         {"token_entity_ratio", TokenEntityRatio(corpus)}};
      manifest.outputs = {synth_out};
      manifest_path = synth_out + ".manifest.json";
    };
  });

  // ingest -----------------------------------------------------------------
  std::string ingest_in, ingest_out, ingest_scheme = "bio", ingest_types;
  bool ingest_strict = false;
  auto *cmd_ingest = app.add_subcommand("ingest", "Parse BIO into corpus JSON-lines");
  cmd_ingest->add_option("--in", ingest_in, "BIO input")->required();
  cmd_ingest->add_option("--out", ingest_out, "JSON-lines output")->required();
  cmd_ingest->add_option("--scheme", ingest_scheme, "bio or iob2")
      ->capture_default_str()->envname(Env("scheme"));
  cmd_ingest->add_option("--types", ingest_types,
                         "Comma-separated fixed type inventory");
  cmd_ingest->add_flag("--strict", ingest_strict, "Reject dangling I- tags")
      ->envname(Env("strict"));
  cmd_ingest->add_flag("--lenient{false}", ingest_strict, "Repair dangling I- tags");
  cmd_ingest->callback([&] {
    action = [&] {
      BioOptions options;
      if (ingest_scheme == "iob2") {
        options.scheme = BioScheme::kIob2;
      } else if (ingest_scheme != "bio") {
        throw UsageError("UnknownScheme", ingest_scheme);
      }
      options.strict = ingest_strict;
      if (!ingest_types.empty()) {
        options.fixed_types = TypeInventory(SplitCommas(ingest_types));
      }
      std::ifstream in(ingest_in, std::ios::binary);
      if (!in) throw DataError("IoError", "cannot read " + ingest_in);
      const Corpus corpus = ParseBio(in, options);
      std::ofstream out(ingest_out, std::ios::binary);
      if (!out) throw DataError("IoError", "cannot write " + ingest_out);
      WriteCorpusJsonl(corpus, out);
      manifest.command = "ingest";
      manifest.args = {"--in", ingest_in, "--out", ingest_out, "--scheme",
                       ingest_scheme};
      if (!ingest_types.empty()) {
        manifest.args.insert(manifest.args.end(), {"--types", ingest_types});
      }
      if (ingest_strict) manifest.args.push_back("--strict");
      manifest.config = {{"strict", ingest_strict},
                         {"scheme", ingest_scheme},
                         {"types", corpus.types.names()},
                         {"sentences", corpus.sentences.size()}};
      manifest.inputs = {ingest_in};
      manifest.outputs = {ingest_out};
      manifest_path = ingest_out + ".manifest.json";
    };
  });

  // episode ----------------------------------------------------------------
  std::string episode_train, episode_out;
  EpisodeSpec episode_spec;
  auto *cmd_episode = app.add_subcommand("episode", "Sample and save one K-shot episode");
  cmd_episode->add_option("--train", episode_train, "Training corpus")->required();
  cmd_episode->add_option("--out", episode_out, "Episode JSON-lines")->required();
  cmd_episode->add_option("--k", episode_spec.k_shots, "Shots per type")
      ->capture_default_str()->envname(Env("k"));
  cmd_episode->add_option("--seed", episode_spec.seed, "Random seed")
      ->capture_default_str()->envname(Env("seed"));
  cmd_episode->add_option("--fold", episode_spec.fold_id, "Fold id")
      ->capture_default_str()->envname(Env("fold"));
  cmd_episode->callback([&] {
    action = [&] {
      const Corpus train = LoadCorpusFile(episode_train, {});
      SaveEpisodeFile(SampleEpisode(train, episode_spec), episode_out);
      manifest.command = "episode";
      manifest.args = {"--train", episode_train, "--out", episode_out,
                       "--k", std::to_string(episode_spec.k_shots),
                       "--seed", std::to_string(episode_spec.seed),
                       "--fold", std::to_string(episode_spec.fold_id)};
      manifest.inputs = {episode_train};
      manifest.outputs = {episode_out};
      manifest_path = episode_out + ".manifest.json";
    };
  });

  // run --------------------------------------------------------------------
  RunOptions run;
  auto *cmd_run = app.add_subcommand("run", "Few-shot experiment over folds");
  AddRunOptions(cmd_run, run);
  cmd_run->callback([&] {
    action = [&] {
      FinishRunOptions(run);
      const auto [train, test] = LoadTrainTest(run);
      const RunResult result = RunExperiment(train, test, run.cfg);
      const fs::path dir(run.out);
      fs::create_directories(dir);
      const fs::path csv = dir / "folds.csv";
      std::ofstream out(csv, std::ios::binary);
      WriteReportCsv(result.report, out);
      manifest.outputs.push_back(csv.string());
      WriteFoldArtifacts(result, train.types, dir, &manifest.outputs);
      manifest.command = "run";
      manifest.args = RunArgs(run);
      manifest.config = RunConfigToJson(run.cfg);
      manifest.inputs = {run.train_path, run.test_path};
      manifest_path = dir / "manifest.json";
      std::cout << "mean_f1 " << FormatFixed(result.report.mean_f1) << " std_f1 "
                << (result.report.std_f1 ? FormatFixed(*result.report.std_f1) : "n/a")
                << " folds " << result.report.fold_count << '\n';
    };
  });

  // sweep ------------------------------------------------------------------
  RunOptions sweep;
  std::string sweep_param = "alpha", sweep_values = "1,3,5";
  auto *cmd_sweep = app.add_subcommand("sweep", "Experiments over an alpha or K grid");
  AddRunOptions(cmd_sweep, sweep);
  cmd_sweep->add_option("--param", sweep_param, "alpha or k")->capture_default_str();
  cmd_sweep->add_option("--values", sweep_values, "Comma-separated grid")
      ->capture_default_str();
  cmd_sweep->callback([&] {
    action = [&] {
      FinishRunOptions(sweep);
      const SweepParameter parameter = ParseSweepParameter(sweep_param);
      const std::vector<double> grid = ParseGrid(sweep_values);
      const auto [train, test] = LoadTrainTest(sweep);
      const std::vector<SweepPoint> points =
          RunSweep(train, test, sweep.cfg, parameter, grid);
      const fs::path dir(sweep.out);
      fs::create_directories(dir);
      const fs::path table = dir / "sweep_table.csv";
      const fs::path long_csv = dir / "sweep_long.csv";
      {
        std::ofstream t(table, std::ios::binary);
        WriteSweepTableCsv(parameter, points, t);
        std::ofstream l(long_csv, std::ios::binary);
        WriteSweepLongCsv(parameter, points, l);
      }
      std::ifstream t(table);
      std::cout << t.rdbuf();
      manifest.command = "sweep";
      manifest.args = RunArgs(sweep);
      manifest.args.insert(manifest.args.end(),
                           {"--param", sweep_param, "--values", sweep_values});
      manifest.config = RunConfigToJson(sweep.cfg);
      manifest.config["sweep"] = {{"param", sweep_param}, {"values", grid}};
      manifest.inputs = {sweep.train_path, sweep.test_path};
      manifest.outputs = {table.string(), long_csv.string()};
      manifest_path = dir / "manifest.json";
    };
  });

  // linearize / delinearize ------------------------------------------------
  std::string lin_format, lin_in, lin_out;
  auto *cmd_lin = app.add_subcommand("linearize", "Render a corpus as GENRE/TANL lines");
  cmd_lin->add_option("--format", lin_format, "genre or tanl")->required();
  cmd_lin->add_option("--in", lin_in, "Corpus (BIO or .jsonl)")->required();
  cmd_lin->add_option("--out", lin_out, "One linearized sentence per line")->required();
  cmd_lin->callback([&] {
    action = [&] {
      const Variant format = ParseVariant(lin_format);
      const Corpus corpus = LoadCorpusFile(lin_in, {});
      std::ofstream out(lin_out, std::ios::binary);
      if (!out) throw DataError("IoError", "cannot write " + lin_out);
      for (const Sentence &s : corpus.sentences) {
        const std::vector<std::string> tokens = Linearize(s, format, corpus.types);
        for (size_t i = 0; i < tokens.size(); ++i) out << (i ? " " : "") << tokens[i];
        out << '\n';
      }
      manifest.command = "linearize";
      manifest.args = {"--format", lin_format, "--in", lin_in, "--out", lin_out};
      manifest.config = {{"format", lin_format}, {"types", corpus.types.names()}};
      manifest.inputs = {lin_in};
      manifest.outputs = {lin_out};
      manifest_path = lin_out + ".manifest.json";
    };
  });

  std::string delin_format, delin_in, delin_out, delin_types;
  bool delin_lenient = false;
  auto *cmd_delin =
      app.add_subcommand("delinearize", "Parse GENRE/TANL lines back into a corpus");
  cmd_delin->add_option("--format", delin_format, "genre or tanl")->required();
  cmd_delin->add_option("--in", delin_in, "Linearized lines")->required();
  cmd_delin->add_option("--out", delin_out, "Corpus (BIO, or .jsonl)")->required();
  cmd_delin->add_option("--types", delin_types, "Comma-separated type inventory")
      ->required();
  cmd_delin->add_flag("--lenient", delin_lenient, "Drop malformed markup")
      ->envname(Env("lenient"));
  cmd_delin->add_flag("--strict{false}", delin_lenient, "Fail on malformed markup");
  cmd_delin->callback([&] {
    action = [&] {
      const Variant format = ParseVariant(delin_format);
      Corpus corpus;
      corpus.types = TypeInventory(SplitCommas(delin_types));
      std::ifstream in(delin_in, std::ios::binary);
      if (!in) throw DataError("IoError", "cannot read " + delin_in);
      std::string line;
      int warnings = 0;
      int line_number = 0;
      while (std::getline(in, line)) {
        ++line_number;
        std::istringstream words(line);
        std::vector<std::string> tokens;
        std::string w;
        while (words >> w) tokens.push_back(w);
        if (tokens.empty()) continue;
        DelinearizeResult r;
        try {
          r = Delinearize(tokens, format, corpus.types,
                          delin_lenient ? ParseMode::kLenient : ParseMode::kStrict);
        } catch (const Error &e) {
          throw Error(e.category(), e.kind(),
                      "line " + std::to_string(line_number) + ": " + e.what());
        }
        warnings += r.warnings;
        if (r.sentence.tokens.empty()) {
          ++warnings;
          continue;
        }
        corpus.sentences.push_back(std::move(r.sentence));
      }
      if (corpus.sentences.empty()) throw DataError("EmptyInput", "no sentences");
      SaveCorpusFile(corpus, delin_out);
      std::cerr << "warnings " << warnings << '\n';
      manifest.command = "delinearize";
      manifest.args = {"--format", delin_format, "--in", delin_in, "--out",
                       delin_out, "--types", delin_types};
      if (delin_lenient) manifest.args.push_back("--lenient");
      manifest.config = {{"format", delin_format},
                         {"lenient", delin_lenient},
                         {"warnings", warnings}};
      manifest.inputs = {delin_in};
      manifest.outputs = {delin_out};
      manifest_path = delin_out + ".manifest.json";
    };
  });

  // replay -----------------------------------------------------------------
  std::string replay_manifest, replay_out;
  auto *cmd_replay = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  cmd_replay->add_option("manifest", replay_manifest, "Manifest JSON")->required();
  cmd_replay->add_option("--out", replay_out, "Override the output path");
  cmd_replay->callback([&] {
    action = [&] { CmdReplay(replay_manifest, replay_out); };
  });

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kExitUsage;
  }
  action();
  if (!manifest_path.empty()) {
    const double wall = std::chrono::duration<double>(
                            std::chrono::steady_clock::now() - started)
                            .count();
    WriteManifest(manifest, wall, manifest_path);
  }
  return kExitOk;
}

}  // namespace

int RunCli(const std::vector<std::string> &args) {
  try {
    return Dispatch(args);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    switch (e.category()) {
      case ErrorCategory::kUsage: return kExitUsage;
      case ErrorCategory::kData: return kExitData;
      case ErrorCategory::kDivergence: return kExitDivergence;
    }
    return kExitData;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}

}  // namespace fffner
