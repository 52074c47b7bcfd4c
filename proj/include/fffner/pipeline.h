#ifndef FFFNER_PIPELINE_H_
#define FFFNER_PIPELINE_H_

// End-to-end few-shot experiments: episode sampling, optional masked-token
// pretraining, fine-tuning, prediction and scoring for every fold.

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fffner/corpus.h"
#include "fffner/encoder.h"
#include "fffner/episode.h"
#include "fffner/eval.h"
#include "fffner/formulate.h"
#include "fffner/json_io.h"
#include "fffner/trainer.h"

namespace fffner {

inline constexpr const char *kToolVersion = "0.3.0";

struct RunConfig {
  int k_shots = 5;
  int folds = 10;
  int first_fold = 0;
  uint64_t seed = 1;
  Variant variant = Variant::kFff;
  double alpha = 3.0;
  double entity_token_ratio = 10.0;
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 2e-4;
  double weight_decay = 0.01;
  // nullopt: longest gold entity in the fold's episode + 2.
  MaxSpanLen max_span_len;
  int pretrain_steps = 1500;
  int pretrain_batch_size = 32;
  double pretrain_learning_rate = 1e-3;
  EncoderConfig encoder;
  // One externally supplied episode per fold; overrides sampling.
  std::vector<std::string> episode_files;
  // Extra attempts with a fresh seed after a diverged fold.
  int restarts = 1;
  // Folds trained concurrently.
  int jobs = 1;
};

Json RunConfigToJson(const RunConfig &cfg);
RunConfig RunConfigFromJson(const Json &json);

struct FoldOutcome {
  FoldScore score;
  Episode episode;
  TrainStats stats;
  std::vector<std::vector<TypedSpan>> predictions;
  int attempts = 1;
  std::string error;  // set when the fold diverged
};

struct RunResult {
  EvalReport report;
  std::vector<FoldOutcome> folds;
};

// Vocabulary from the training text, random init, then masked-token
// pretraining on the unlabeled training sentences when pretrain_steps > 0.
// Depends only on (train corpus, encoder, pretraining settings, seed), so it
// can be shared across folds, variants and sweep points.
ModelParams PrepareBackbone(const Corpus &train, const RunConfig &cfg);

// Fine-tunes a copy of `backbone` for one episode and scores it on `test`.
FoldOutcome RunFold(const Corpus &train, const Corpus &test,
                    const RunConfig &cfg, const ModelParams &backbone,
                    int fold_id);

RunResult RunExperiment(const Corpus &train, const Corpus &test,
                        const RunConfig &cfg,
                        const ModelParams *backbone = nullptr);

enum class SweepParameter { kAlpha, kShots };

struct SweepPoint {
  double value = 0.0;
  RunResult result;
};

// One experiment per grid value; the backbone is pretrained once.
std::vector<SweepPoint> RunSweep(const Corpus &train, const Corpus &test,
                                 const RunConfig &base, SweepParameter parameter,
                                 const std::vector<double> &values,
                                 const ModelParams *backbone = nullptr);

std::string_view SweepParameterName(SweepParameter parameter);
SweepParameter ParseSweepParameter(std::string_view name);

// parameter,value,mean_f1,std_f1,folds
void WriteSweepTableCsv(SweepParameter parameter,
                        const std::vector<SweepPoint> &points, std::ostream &out);
// parameter,value,fold_id,precision,recall,f1,gold,predicted,correct
void WriteSweepLongCsv(SweepParameter parameter,
                       const std::vector<SweepPoint> &points, std::ostream &out);

// Reads BIO, or corpus JSON-lines when the path ends in .jsonl.
Corpus LoadCorpusFile(const std::string &path, const BioOptions &options);
void SaveCorpusFile(const Corpus &corpus, const std::string &path);

// Runs the command line (args excludes the program name) and returns the
// process exit code: 0 success, 2 usage, 3 data, 4 divergence.
int RunCli(const std::vector<std::string> &args);

}  // namespace fffner

#endif  // FFFNER_PIPELINE_H_
