#include <cstdlib>
#include <map>
#include <set>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fffner/error.h"
#include "fffner/pipeline.h"
#include "fffner/synth.h"

using namespace fffner;
namespace fs = std::filesystem;

namespace {

fs::path Scratch(const std::string &name) {
  const fs::path dir = fs::temp_directory_path() / ("fffner_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string Slurp(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void WriteText(const fs::path &path, const std::string &text) {
  std::ofstream(path, std::ios::binary) << text;
}

int Cli(std::vector<std::string> args) { return RunCli(args); }

RunConfig SmallRun() {
  RunConfig cfg;
  cfg.folds = 2;
  cfg.k_shots = 2;
  cfg.epochs = 2;
  cfg.pretrain_steps = 5;
  cfg.encoder.dim = 16;
  cfg.encoder.layers = 1;
  cfg.encoder.ffn_dim = 32;
  cfg.encoder.heads = 2;
  return cfg;
}

}  // namespace

TEST_CASE("synthetic corpus") {
  const Corpus a = GenerateSynthetic({4, 1000, 3});
  CHECK(a.sentences.size() == 1000);
  CHECK(a.types.size() == 4);
  CHECK(a == GenerateSynthetic({4, 1000, 3}));
  const Corpus b = GenerateSynthetic({4, 1000, 4});
  CHECK(a.types == b.types);
  CHECK(a.sentences != b.sentences);
  const double ratio = TokenEntityRatio(a);
  CHECK(ratio >= 8.0);
  CHECK(ratio <= 12.0);
  for (const Sentence &s : a.sentences) CHECK_NOTHROW(ValidateSentence(s, 4));
  CHECK_THROWS_AS(GenerateSynthetic({1, 1000, 0}), Error);
  CHECK_THROWS_AS(GenerateSynthetic({4, 50, 0}), Error);
  CHECK_THROWS_AS(GenerateSynthetic({7, 1000, 0}), Error);
}

TEST_CASE("some surface tokens carry more than one type") {
  const Corpus c = GenerateSynthetic({4, 2000, 1});
  std::map<std::string, std::set<int>> types_of;
  for (const Sentence &s : c.sentences) {
    for (const TypedSpan &e : s.entities) {
      for (int i = e.start; i <= e.end; ++i) types_of[s.tokens[i]].insert(e.type_id);
    }
  }
  int ambiguous = 0;
  for (const auto &[token, types] : types_of) ambiguous += types.size() > 1;
  CHECK(ambiguous >= 3);
}

TEST_CASE("run config JSON round trip") {
  RunConfig cfg = SmallRun();
  cfg.max_span_len = 4;
  cfg.variant = Variant::kNoBrackets;
  cfg.episode_files = {"a.jsonl", "b.jsonl"};
  const Json json = RunConfigToJson(cfg);
  CHECK(RunConfigToJson(RunConfigFromJson(json)) == json);
}

TEST_CASE("experiment: structure, determinism, shared backbone") {
  const Corpus train = GenerateSynthetic({3, 200, 1});
  Corpus test = GenerateSynthetic({3, 100, 2});
  test.sentences.resize(20);
  const RunConfig cfg = SmallRun();
  const RunResult a = RunExperiment(train, test, cfg);
  REQUIRE(a.folds.size() == 2);
  CHECK(a.report.fold_count == 2);
  CHECK(a.report.std_f1.has_value());
  for (const FoldOutcome &f : a.folds) {
    CHECK(f.stats.epochs.size() == 2);
    CHECK(f.predictions.size() == test.sentences.size());
  }
  const ModelParams backbone = PrepareBackbone(train, cfg);
  const RunResult b = RunExperiment(train, test, cfg, &backbone);
  std::ostringstream ca, cb;
  WriteReportCsv(a.report, ca);
  WriteReportCsv(b.report, cb);
  CHECK(ca.str() == cb.str());

  // One-point sweep equals a direct run.
  const auto points = RunSweep(train, test, cfg, SweepParameter::kAlpha, {cfg.alpha}, &backbone);
  REQUIRE(points.size() == 1);
  std::ostringstream cs;
  WriteReportCsv(points[0].result.report, cs);
  CHECK(cs.str() == ca.str());
}

TEST_CASE("cli: synth, ingest, episode, linearize, delinearize, exit codes") {
  const fs::path dir = Scratch("cli");
  const std::string bio = (dir / "train.bio").string();
  REQUIRE(Cli({"synth", "--types", "3", "--sentences", "150", "--seed", "4", "--out", bio}) == 0);
  CHECK(fs::exists(bio + ".manifest.json"));

  const std::string jsonl = (dir / "train.jsonl").string();
  CHECK(Cli({"ingest", "--in", bio, "--out", jsonl}) == 0);
  CHECK(Cli({"episode", "--train", jsonl, "--out", (dir / "ep.jsonl").string(), "--k", "2"}) == 0);

  const std::string lin = (dir / "train.genre").string();
  const std::string back = (dir / "back.bio").string();
  CHECK(Cli({"linearize", "--format", "genre", "--in", bio, "--out", lin}) == 0);
  const Corpus original = LoadCorpusFile(bio, {});
  std::string types;
  for (const std::string &n : original.types.names()) types += (types.empty() ? "" : ",") + n;
  CHECK(Cli({"delinearize", "--format", "genre", "--in", lin, "--out", back, "--types", types}) == 0);
  CHECK(Slurp(back) == Slurp(bio));

  CHECK(Cli({"linearize", "--format", "xml", "--in", bio, "--out", lin}) == 2);
  CHECK(Cli({"frobnicate"}) == 2);
  CHECK(Cli({"synth", "--types", "1", "--out", (dir / "x.bio").string()}) == 2);

  // Malformed line 7, strict vs lenient dangling tags.
  const fs::path bad = dir / "bad.bio";
  WriteText(bad, "a O\nb O\n\nc O\nd O\ne O\nf O extra\n");
  CHECK(Cli({"ingest", "--in", bad.string(), "--out", (dir / "bad.jsonl").string()}) == 3);
  const fs::path dangling = dir / "dangling.bio";
  WriteText(dangling, "X I-LOC\n");
  CHECK(Cli({"ingest", "--in", dangling.string(), "--out", (dir / "d.jsonl").string(),
             "--strict"}) == 3);
  CHECK(Cli({"ingest", "--in", dangling.string(), "--out", (dir / "d.jsonl").string()}) == 0);

  // Lenient delinearize of a corrupted file.
  const fs::path corrupt = dir / "corrupt.tanl";
  WriteText(corrupt, "[ Tom | PER lives\n[ Paris | LOC ] ] is big\n");
  CHECK(Cli({"delinearize", "--format", "tanl", "--in", corrupt.string(), "--out",
             (dir / "c.jsonl").string(), "--types", "LOC,PER"}) == 3);
  CHECK(Cli({"delinearize", "--format", "tanl", "--in", corrupt.string(), "--out",
             (dir / "c.jsonl").string(), "--types", "LOC,PER", "--lenient"}) == 0);
  const std::string manifest = Slurp(dir / "c.jsonl.manifest.json");
  CHECK(manifest.find("\"warnings\": 3") != std::string::npos);
}

TEST_CASE("cli: run writes artifacts and replays byte-identically") {
  const fs::path dir = Scratch("run");
  const std::string train = (dir / "train.bio").string();
  const std::string test = (dir / "test.bio").string();
  REQUIRE(Cli({"synth", "--types", "2", "--sentences", "120", "--seed", "1", "--out", train}) == 0);
  REQUIRE(Cli({"synth", "--types", "2", "--sentences", "100", "--seed", "2", "--out", test}) == 0);
  const std::string out = (dir / "r").string();
  REQUIRE(Cli({"run", "--train", train, "--test", test, "--out", out, "--folds", "2", "--k",
               "2", "--epochs", "1", "--pretrain-steps", "2", "--dim", "16", "--ffn-dim",
               "32", "--layers", "1"}) == 0);
  for (const char *name : {"folds.csv", "manifest.json", "predictions_fold0.jsonl",
                           "train_stats_fold1.jsonl", "episode_fold1.jsonl"}) {
    CHECK(fs::exists(fs::path(out) / name));
  }
  const std::string replay = (dir / "replay").string();
  CHECK(Cli({"replay", (fs::path(out) / "manifest.json").string(), "--out", replay}) == 0);
  CHECK(Slurp(fs::path(out) / "folds.csv") == Slurp(fs::path(replay) / "folds.csv"));
  CHECK(Slurp(fs::path(out) / "predictions_fold1.jsonl") ==
        Slurp(fs::path(replay) / "predictions_fold1.jsonl"));

  // An external episode file is used verbatim.
  const std::string ext = (dir / "ext").string();
  CHECK(Cli({"run", "--train", train, "--test", test, "--out", ext, "--folds", "1", "--k", "2",
             "--epochs", "1", "--pretrain-steps", "2", "--dim", "16", "--ffn-dim", "32",
             "--layers", "1", "--episode-file",
             (fs::path(out) / "episode_fold1.jsonl").string()}) == 0);
  CHECK(Slurp(fs::path(ext) / "episode_fold0.jsonl") ==
        Slurp(fs::path(out) / "episode_fold1.jsonl"));

  CHECK(Cli({"run", "--train", train, "--test", test, "--out", ext, "--variant", "genre"}) == 2);
  CHECK(Cli({"run", "--train", (dir / "missing.bio").string(), "--test", test, "--out", ext}) == 3);
}

TEST_CASE("cli: environment overrides") {
  const fs::path dir = Scratch("env");
  const std::string bio = (dir / "a.bio").string();
  setenv("FFFNER_SENTENCES", "123", 1);
  REQUIRE(Cli({"synth", "--out", bio}) == 0);
  unsetenv("FFFNER_SENTENCES");
  CHECK(LoadCorpusFile(bio, {}).sentences.size() == 123);
}
