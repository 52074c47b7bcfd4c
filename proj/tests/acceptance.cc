// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--workdir DIR] [--only 1,5,7]
//
// Criteria 7-9 train several hundred small models on the synthetic corpus
// and take a while on one core; the rest finish in seconds.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "fffner/corpus.h"
#include "fffner/encoder.h"
#include "fffner/episode.h"
#include "fffner/error.h"
#include "fffner/eval.h"
#include "fffner/formulate.h"
#include "fffner/pipeline.h"
#include "fffner/predict.h"
#include "fffner/pretrain.h"
#include "fffner/sampler.h"
#include "fffner/synth.h"
#include "fffner/trainer.h"
#include "helpers.h"
#include "oracles.h"

using namespace fffner;
using fffner::testing::Join;
using fffner::testing::RandomSentence;
using fffner::testing::TomSentence;
using fffner::testing::Words;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(double x, int digits = 4) { return FormatFixed(x, digits); }

// ---------------------------------------------------------------------------
// 1. Formulation exactness

Outcome FormulationExactness() {
  const Sentence tom = TomSentence();
  struct Row {
    Sentence sentence;
    Span span;
    Variant variant;
    std::string expected;
  };
  const std::vector<Row> table = {
      {tom, {3, 4}, Variant::kFff, "Tom lives in [ <mask> ] [ Los Angeles ] [ <mask> ]"},
      {tom, {3, 4}, Variant::kNoBrackets, "Tom lives in <mask> Los Angeles <mask>"},
      {tom, {3, 4}, Variant::kNotMask, "Tom lives in [ span ] [ Los Angeles ] [ type ]"},
      {tom, {3, 4}, Variant::kSpanTypeTogether, "Tom lives in [ Los Angeles ] [ <mask> ]"},
      {tom, {0, 0}, Variant::kFff, "[ <mask> ] [ Tom ] [ <mask> ] lives in Los Angeles"},
      {{{"w"}, {}}, {0, 0}, Variant::kFff, "[ <mask> ] [ w ] [ <mask> ]"},
  };
  for (const Row &row : table) {
    const FormulatedInstance x = Formulate(row.sentence, row.span, row.variant);
    if (Join(x.tokens) != row.expected) {
      return {false, "got \"" + Join(x.tokens) + "\""};
    }
    if (static_cast<int>(x.tokens.size()) !=
        row.sentence.size() + InsertedTokenCount(row.variant)) {
      return {false, "bad length for " + row.expected};
    }
  }
  Rng rng(1);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const Sentence s = RandomSentence(rng, 3, 20);
    for (const Span &span : AllSpans(s.size())) {
      if (Formulate(s, span, Variant::kFff).tokens.size() != s.tokens.size() + 8) {
        return {false, "length != n+8"};
      }
      ++checked;
    }
  }
  return {true, "6 table rows exact; n+8 on " + std::to_string(checked) + " random spans"};
}

// ---------------------------------------------------------------------------
// 2. Sampling distribution

Outcome SamplingDistribution() {
  const Sentence s{Words("a b c d e f"), {{2, 3, 0}}};
  SamplerConfig cfg;
  cfg.alpha = 0.01;  // budget 1, so each call is one first draw
  const auto candidates = EnumerateCandidates(s, cfg);
  double total = 0.0;
  for (const auto &c : candidates) total += c.weight;
  std::map<Span, int> hits;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    cfg.seed = static_cast<uint64_t>(i);
    hits[SampleNegatives(s, cfg, 7, 0).at(0)]++;
  }
  double worst = 0.0;
  for (const auto &c : candidates) {
    const double p = c.weight / total;
    const double z = std::abs(hits[c.span] - draws * p) / std::sqrt(draws * p * (1 - p));
    worst = std::max(worst, z);
  }
  if (worst >= 3.0) return {false, "max |z| " + Fmt(worst)};

  Rng rng(2);
  for (int trial = 0; trial < 1000; ++trial) {
    const Sentence x = RandomSentence(rng, 4, 30);
    const int twice_alpha = 1 + static_cast<int>(rng.UniformInt(10));
    const int max_len = static_cast<int>(rng.UniformInt(6));
    SamplerConfig b;
    b.alpha = twice_alpha / 2.0;
    if (max_len > 0) b.max_span_len = max_len;
    if (NegativeBudget(x, b) != oracle::Budget(x, twice_alpha, 10, max_len)) {
      return {false, "budget mismatch on sentence " + std::to_string(trial)};
    }
  }
  return {true, std::to_string(candidates.size()) + " candidates, max |z| " + Fmt(worst) +
                    "; 1000/1000 budgets exact"};
}

// ---------------------------------------------------------------------------
// 3. Resolution oracle

Outcome ResolutionOracle() {
  Rng rng(3);
  for (int trial = 0; trial < 10000; ++trial) {
    const int n = 1 + static_cast<int>(rng.UniformInt(15));
    const int k = static_cast<int>(rng.UniformInt(31));
    std::vector<SpanPrediction> preds;
    for (int i = 0; i < k; ++i) {
      const int l = static_cast<int>(rng.UniformInt(n));
      const int r = l + static_cast<int>(rng.UniformInt(std::min(5, n - l)));
      const double p = rng.Bernoulli(0.5) ? static_cast<double>(rng.UniformInt(11)) / 10.0
                                          : rng.Uniform();
      preds.push_back({{l, r}, p, static_cast<int>(rng.UniformInt(4)), 1.0});
    }
    const auto got = Resolve(preds);
    if (got != oracle::Resolve(preds)) {
      return {false, "mismatch on set " + std::to_string(trial)};
    }
    rng.Shuffle(preds);
    if (Resolve(preds) != got) return {false, "order dependence on set " + std::to_string(trial)};
  }
  return {true, "10000/10000 sets match, shuffled input included"};
}

// ---------------------------------------------------------------------------
// 4. F1 oracle

Outcome F1Oracle() {
  Corpus tom;
  tom.types = TypeInventory({"PER", "LOC"});
  tom.sentences = {TomSentence()};
  const FoldScore hand = SpanF1(tom, {{{0, 0, 0}, {3, 3, 1}}});
  if (hand.precision != 0.5 || hand.recall != 0.5 || hand.f1 != 0.5) {
    return {false, "hand case P/R/F1 = " + Fmt(hand.precision) + "/" + Fmt(hand.recall) +
                       "/" + Fmt(hand.f1)};
  }
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    Corpus gold;
    gold.types = TypeInventory({"A", "B", "C"});
    std::vector<std::vector<TypedSpan>> gold_sets, predicted;
    const int n = 1 + static_cast<int>(rng.UniformInt(8));
    for (int i = 0; i < n; ++i) {
      const Sentence s = RandomSentence(rng, 3, 12);
      std::set<TypedSpan> p;
      for (const TypedSpan &e : s.entities) {
        if (rng.Bernoulli(0.5)) p.insert(e);
        if (rng.Bernoulli(0.2)) p.insert({e.start, e.end, (e.type_id + 1) % 3});
      }
      for (int extra = static_cast<int>(rng.UniformInt(3)); extra > 0; --extra) {
        const int l = static_cast<int>(rng.UniformInt(s.size()));
        const int r = l + static_cast<int>(rng.UniformInt(s.size() - l));
        p.insert({l, r, static_cast<int>(rng.UniformInt(3))});
      }
      gold_sets.push_back(s.entities);
      predicted.emplace_back(p.begin(), p.end());
      gold.sentences.push_back(s);
    }
    const FoldScore got = SpanF1(gold, predicted);
    const oracle::Counts want = oracle::SetIntersection(gold_sets, predicted);
    const double p = want.predicted ? double(want.correct) / want.predicted : 0.0;
    const double r = want.gold ? double(want.correct) / want.gold : 0.0;
    const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
    if (got.counts.gold != want.gold || got.counts.predicted != want.predicted ||
        got.counts.correct != want.correct || got.precision != p || got.recall != r ||
        got.f1 != f) {
      return {false, "mismatch on pair " + std::to_string(trial)};
    }
  }
  return {true, "hand case 0.5/0.5/0.5; 1000/1000 random pairs exact"};
}

// ---------------------------------------------------------------------------
// 5. Gradient correctness

ModelParams GradModel(uint64_t seed, int type_classes) {
  EncoderConfig c;
  c.dim = seed % 2 ? 16 : 8;
  c.layers = 1 + static_cast<int>(seed % 2);
  c.heads = 2;
  c.ffn_dim = 2 * c.dim;
  c.max_len = 32;
  c.dropout = 0.0;
  c.init_std = 0.3;
  c.type_classes = type_classes;
  return InitModel(c, Vocabulary::Build({TomSentence()}), seed);
}

Outcome GradientCorrectness() {
  const int seeds = 10;
  const double h = 1e-3;
  double worst[4] = {0, 0, 0, 0};
  const char *names[4] = {"mlm", "pos", "neg", "joint"};
  for (uint64_t seed = 0; seed < seeds; ++seed) {
    {
      const ModelParams p = GradModel(seed, 2);
      MlmConfig cfg;
      cfg.mask_rate = 0.4;
      Rng rng(seed, {1});
      const MlmExample ex = MakeMlmExample(TomSentence(), p.vocab, cfg, rng, p.config.max_len);
      Weights g = p.weights.ZerosLike();
      MlmLossAndGradient(p, ex, nullptr, &g);
      worst[0] = std::max(worst[0], oracle::GradientRelativeError(
                                        p, g, [&](const ModelParams &m) { return MlmLoss(m, ex); }, h));
    }
    for (int which : {1, 2, 3}) {
      const Variant v = which == 3 ? Variant::kSpanTypeTogether : Variant::kFff;
      const ModelParams p = GradModel(1000 * which + seed, which == 3 ? 3 : 2);
      const Span span = which == 2 ? Span{1, 2} : Span{3, 4};
      const EncodedInstance x = EncodeInstance(p, Formulate(TomSentence(), span, v));
      if ((which == 2) == x.entity_type.has_value()) return {false, "label setup"};
      Weights g = p.weights.ZerosLike();
      SpanLossAndGradient(p, x, nullptr, &g);
      const double err = oracle::GradientRelativeError(
          p, g,
          [&](const ModelParams &m) { return SpanLoss(Score(m, x), x.entity_type).total(); }, h);
      worst[which] = std::max(worst[which], err);
    }
  }
  std::string detail;
  bool pass = true;
  for (int i = 0; i < 4; ++i) {
    detail += std::string(i ? ", " : "") + names[i] + " " + FormatFixed(worst[i] * 1e6, 3) + "e-6";
    pass &= worst[i] < 1e-4;
  }
  return {pass, "max relative error over " + std::to_string(seeds) + " seeds: " + detail};
}

// ---------------------------------------------------------------------------
// 6. End-to-end memorization

Outcome Memorization() {
  Episode episode;
  episode.types = TypeInventory({"PER", "LOC"});
  episode.train_sentences = {TomSentence()};
  episode.spec.k_shots = 1;
  EncoderConfig enc;
  enc.type_classes = 2;
  ModelParams params = InitModel(enc, Vocabulary::Build(episode.train_sentences), 6);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 6;
  Train(episode, cfg, &params);
  const Sentence &s = episode.train_sentences[0];
  int wrong = 0;
  double min_pos = 1.0, max_neg = 0.0;
  const auto predictions = ScoreSentence(params, s, {Variant::kFff, std::nullopt});
  for (const SpanPrediction &p : predictions) {
    std::optional<int> gold;
    for (const TypedSpan &e : s.entities) {
      if (e.span() == p.span) gold = e.type_id;
    }
    if (gold) {
      min_pos = std::min(min_pos, p.entity_prob);
      wrong += !(p.entity_prob >= 0.5 && p.type_id == *gold);
    } else {
      max_neg = std::max(max_neg, p.entity_prob);
      wrong += !(p.entity_prob < 0.5);
    }
  }
  return {wrong == 0, std::to_string(predictions.size() - wrong) + "/" +
                          std::to_string(predictions.size()) +
                          " spans correct; min gold p " + Fmt(min_pos) + ", max other p " +
                          Fmt(max_neg)};
}

// ---------------------------------------------------------------------------
// 7-9. Synthetic experiments

struct Experiments {
  Corpus train;
  Corpus test;
  RunConfig base;
  std::optional<ModelParams> backbone;
  std::map<std::string, RunResult> cache;
  fs::path workdir;

  const ModelParams &Backbone() {
    if (!backbone) backbone = PrepareBackbone(train, base);
    return *backbone;
  }

  const RunResult &Run(const std::string &label, const RunConfig &cfg) {
    auto it = cache.find(label);
    if (it != cache.end()) return it->second;
    const auto started = std::chrono::steady_clock::now();
    RunResult result = RunExperiment(train, test, cfg, &Backbone());
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    std::ofstream out(workdir / (label + ".csv"), std::ios::binary);
    WriteReportCsv(result.report, out);
    std::cout << "    " << label << ": mean F1 " << Fmt(result.report.mean_f1) << " std "
              << (result.report.std_f1 ? Fmt(*result.report.std_f1) : "n/a") << " over "
              << result.report.fold_count << " folds (" << Fmt(seconds, 0) << " s)"
              << std::endl;
    return cache.emplace(label, std::move(result)).first->second;
  }
};

Experiments MakeExperiments(const fs::path &workdir) {
  Experiments e;
  e.workdir = workdir;
  e.train = GenerateSynthetic({4, 2000, 101});
  SynthConfig test_cfg{4, 300, 202};
  e.test = GenerateSynthetic(test_cfg);
  e.test.split = Split::kTest;
  e.base.k_shots = 5;
  e.base.folds = 10;
  e.base.seed = 1;
  e.base.learning_rate = 1e-3;
  e.base.jobs = std::max(1u, std::thread::hardware_concurrency());
  return e;
}

RunConfig With(RunConfig cfg, const std::function<void(RunConfig &)> &edit) {
  edit(cfg);
  return cfg;
}

Outcome AblationOrdering(Experiments &ex) {
  const RunResult &fff = ex.Run("fff_k5_a3", ex.base);
  const RunResult &together = ex.Run(
      "span_type_together_k5_a3",
      With(ex.base, [](RunConfig &c) { c.variant = Variant::kSpanTypeTogether; }));
  const RunResult &no_brackets = ex.Run(
      "no_brackets_k5_a3", With(ex.base, [](RunConfig &c) { c.variant = Variant::kNoBrackets; }));
  const double gap = fff.report.mean_f1 - together.report.mean_f1;
  const double sa = fff.report.std_f1.value_or(0.0);
  const double sb = together.report.std_f1.value_or(0.0);
  const double pooled_se = std::sqrt((sa * sa + sb * sb) / fff.report.fold_count);
  const bool pass = gap > pooled_se && no_brackets.report.mean_f1 <= fff.report.mean_f1;
  return {pass, "FFF " + Fmt(fff.report.mean_f1) + " vs span_type_together " +
                    Fmt(together.report.mean_f1) + " (gap " + Fmt(gap) + ", pooled SE " +
                    Fmt(pooled_se) + "); no_brackets " + Fmt(no_brackets.report.mean_f1)};
}

Outcome AlphaFlatness(Experiments &ex) {
  const RunResult &a3 = ex.Run("fff_k5_a3", ex.base);
  const RunResult &a1 = ex.Run("fff_k5_a1", With(ex.base, [](RunConfig &c) { c.alpha = 1; }));
  const RunResult &a5 = ex.Run("fff_k5_a5", With(ex.base, [](RunConfig &c) { c.alpha = 5; }));
  const double spread = std::abs(a1.report.mean_f1 - a5.report.mean_f1);
  const double sd = a3.report.std_f1.value_or(0.0);
  return {spread < sd, "|F1(a=1) - F1(a=5)| = |" + Fmt(a1.report.mean_f1) + " - " +
                           Fmt(a5.report.mean_f1) + "| = " + Fmt(spread) +
                           " vs std at a=3 " + Fmt(sd) + " (mean " + Fmt(a3.report.mean_f1) +
                           ")"};
}

Outcome ShotsTrend(Experiments &ex) {
  // Folds are independent, so folds 0-4 of the 10-fold K=5 run are exactly
  // what a 5-fold run would produce.
  const RunResult &k5_all = ex.Run("fff_k5_a3", ex.base);
  const EvalReport k5 = Aggregate(
      std::vector<FoldScore>(k5_all.report.folds.begin(), k5_all.report.folds.begin() + 5));
  const RunResult &k50 = ex.Run("fff_k50_a3_5folds", With(ex.base, [](RunConfig &c) {
                                  c.folds = 5;
                                  c.k_shots = 50;
                                }));
  return {k50.report.mean_f1 >= k5.mean_f1,
          "F1(K=50) " + Fmt(k50.report.mean_f1) + " vs F1(K=5) " + Fmt(k5.mean_f1) +
              " over folds 0-4"};
}

// ---------------------------------------------------------------------------
// 10. Round trips

Outcome RoundTrips() {
  Rng rng(10);
  const TypeInventory types({"LOC", "PER", "ORG", "MISC"});
  int bio = 0, episode = 0, genre = 0, tanl = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Sentence s = RandomSentence(rng, 4, 20, true);
    Corpus c;
    c.types = types;
    c.sentences = {s, RandomSentence(rng, 4, 20, true)};
    std::stringstream text;
    EmitBio(c, text);
    BioOptions options;
    options.strict = true;
    options.fixed_types = types;
    bio += ParseBio(text, options) == c;

    Episode e;
    e.types = types;
    e.train_sentences = c.sentences;
    e.spec = {1 + trial % 7, static_cast<uint64_t>(trial), trial % 10};
    std::stringstream saved;
    SaveEpisode(e, saved);
    episode += LoadEpisode(saved) == e;

    genre += Delinearize(Linearize(s, Variant::kGenre, types), Variant::kGenre, types,
                         ParseMode::kStrict).sentence == s;
    tanl += Delinearize(Linearize(s, Variant::kTanl, types), Variant::kTanl, types,
                        ParseMode::kStrict).sentence == s;
  }
  const bool pass = bio == 1000 && episode == 1000 && genre == 1000 && tanl == 1000;
  return {pass, "BIO " + std::to_string(bio) + ", episode " + std::to_string(episode) +
                    ", GENRE " + std::to_string(genre) + ", TANL " + std::to_string(tanl) +
                    " of 1000"};
}

// ---------------------------------------------------------------------------
// 11. Reproducibility

std::string Slurp(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

Outcome Reproducibility(const fs::path &workdir) {
  const fs::path dir = workdir / "replay";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string train = (dir / "train.bio").string();
  const std::string test = (dir / "test.bio").string();
  if (RunCli({"synth", "--types", "4", "--sentences", "400", "--seed", "11", "--out", train}) ||
      RunCli({"synth", "--types", "4", "--sentences", "100", "--seed", "12", "--out", test})) {
    return {false, "synth failed"};
  }
  const fs::path first = dir / "run";
  if (RunCli({"run", "--train", train, "--test", test, "--out", first.string(), "--folds", "3",
              "--epochs", "5", "--pretrain-steps", "50", "--lr", "1e-3", "--jobs", "3"})) {
    return {false, "run failed"};
  }
  const std::string manifest = (first / "manifest.json").string();
  std::vector<fs::path> replays = {dir / "replay_a", dir / "replay_b"};
  for (const fs::path &r : replays) {
    if (RunCli({"replay", manifest, "--out", r.string()})) return {false, "replay failed"};
  }
  int files = 0;
  for (const auto &entry : fs::directory_iterator(first)) {
    const fs::path name = entry.path().filename();
    if (name == "manifest.json") continue;
    const std::string original = Slurp(entry.path());
    for (const fs::path &r : replays) {
      if (Slurp(r / name) != original) return {false, name.string() + " differs"};
    }
    ++files;
  }
  return {true, std::to_string(files) + " output files byte-identical across 2 replays"};
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Acceptance criteria"};
  std::string workdir = (fs::temp_directory_path() / "fffner_acceptance").string();
  std::vector<int> only;
  app.add_option("--workdir", workdir, "Scratch directory for artifacts");
  app.add_option("--only", only, "Run only these criteria")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(workdir);

  Experiments experiments = MakeExperiments(workdir);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"formulation exactness", FormulationExactness},
      {"sampling distribution", SamplingDistribution},
      {"resolution oracle", ResolutionOracle},
      {"F1 oracle", F1Oracle},
      {"gradient correctness", GradientCorrectness},
      {"end-to-end memorization", Memorization},
      {"ablation ordering", [&] { return AblationOrdering(experiments); }},
      {"alpha flatness", [&] { return AlphaFlatness(experiments); }},
      {"shots trend", [&] { return ShotsTrend(experiments); }},
      {"round trips", RoundTrips},
      {"reproducibility", [&] { return Reproducibility(workdir); }},
  };
  int failures = 0;
  for (size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    const auto started = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = criteria[i].second();
    } catch (const std::exception &e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    failures += !outcome.pass;
    std::cout << (outcome.pass ? "PASS" : "FAIL") << " criterion " << number << " ("
              << criteria[i].first << "): " << outcome.detail << " [" << Fmt(seconds, 1)
              << " s]" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
