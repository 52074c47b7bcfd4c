#ifndef FFFNER_ENCODER_H_
#define FFFNER_ENCODER_H_

// Word-level transformer encoder with two classification heads read at the
// is-entity / which-type slots and a tied masked-token prediction head.
// Forward and backward passes are written out by hand; all arithmetic is in
// double precision so that gradients can be checked by finite differences.

#include <array>
#include <cstdint>
#include <functional>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "fffner/corpus.h"
#include "fffner/formulate.h"
#include "fffner/rng.h"

namespace fffner {

using Matrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kUnkToken = "<unk>";

class Vocabulary {
 public:
  Vocabulary() = default;
  // Requires the special tokens <pad>, <unk>, <mask>, "[", "]" and "|".
  explicit Vocabulary(std::vector<std::string> tokens,
                      std::string_view mask_token = kDefaultMaskToken);

  // Specials first, then the slot literals, then every corpus token in
  // sorted order.
  static Vocabulary Build(const std::vector<Sentence> &sentences,
                          std::string_view mask_token = kDefaultMaskToken);

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string> &tokens() const { return tokens_; }
  const std::string &token(int id) const { return tokens_.at(id); }
  // Unknown tokens map to <unk>.
  int Id(std::string_view token) const;
  bool Contains(std::string_view token) const;

  int unk_id() const { return unk_id_; }
  int mask_id() const { return mask_id_; }
  int pad_id() const { return pad_id_; }
  const std::string &mask_token() const { return tokens_.at(mask_id_); }

  bool operator==(const Vocabulary &other) const {
    return tokens_ == other.tokens_ && mask_id_ == other.mask_id_;
  }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
  int pad_id_ = 0;
  int unk_id_ = 0;
  int mask_id_ = 0;
};

struct EncoderConfig {
  int dim = 64;
  int layers = 2;
  int heads = 4;
  int ffn_dim = 128;
  int max_len = 128;
  double dropout = 0.1;
  // Width of the which-type head: |C|, or |C| + 1 when the head also
  // carries the "not an entity" class.
  int type_classes = 1;
  double init_std = 0.02;

  bool operator==(const EncoderConfig &) const = default;
};

void ValidateConfig(const EncoderConfig &config);

struct LayerWeights {
  Matrix norm1_gain, norm1_bias;
  Matrix query_w, query_b, key_w, key_b, value_w, value_b;
  Matrix output_w, output_b;
  Matrix norm2_gain, norm2_bias;
  Matrix ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
};

// Every trainable tensor. Also used as the gradient container.
struct Weights {
  Matrix token_embedding;     // V x d
  Matrix position_embedding;  // max_len x d
  std::vector<LayerWeights> layers;
  Matrix final_norm_gain, final_norm_bias;
  Matrix entity_head_w, entity_head_b;  // d x 2, 1 x 2
  Matrix type_head_w, type_head_b;      // d x T, 1 x T
  Matrix mlm_bias;                      // 1 x V; decoder tied to embeddings

  // Visits tensors in a fixed order with a stable name.
  void ForEach(const std::function<void(const std::string &, Matrix &)> &f);
  void ForEach(
      const std::function<void(const std::string &, const Matrix &)> &f) const;

  Weights ZerosLike() const;
  void SetZero();
  void AddScaled(const Weights &other, double scale);
  void Scale(double factor);
  double SquaredNorm() const;
  bool AllFinite() const;
  size_t ParameterCount() const;
  bool operator==(const Weights &other) const;
};

struct ModelParams {
  EncoderConfig config;
  Vocabulary vocab;
  Weights weights;

  bool operator==(const ModelParams &) const = default;
};

ModelParams InitModel(const EncoderConfig &config, Vocabulary vocab,
                      uint64_t seed);

// Re-creates both classification heads for a new type-head width. With
// `zero` set the heads start at exactly zero logits.
void ResetHeads(ModelParams *params, int type_classes, uint64_t seed,
                bool zero = false);

// Instance mapped to vocabulary ids. For variants without an is-entity slot
// the type head carries |C| + 1 classes and negatives use class |C|.
struct EncodedInstance {
  std::vector<int> ids;
  std::optional<int> is_entity_pos;
  int which_type_pos = 0;
  std::optional<int> entity_type;
};

EncodedInstance EncodeInstance(const ModelParams &params,
                               const FormulatedInstance &instance);

struct HeadOutput {
  // (entity, not-entity)
  std::optional<std::array<double, 2>> is_entity_logits;
  std::vector<double> which_type_logits;
};

// Masked-token example: corrupted ids plus (position, original id) targets.
struct MlmExample {
  std::vector<int> ids;
  std::vector<int> positions;
  std::vector<int> targets;
};

// Eval mode when `dropout` is null; otherwise dropout masks are drawn from
// it in a fixed order.
HeadOutput Score(const ModelParams &params, const EncodedInstance &instance,
                 Rng *dropout = nullptr);

// Final-layer hidden states for a raw id sequence.
Matrix Encode(const ModelParams &params, std::span<const int> ids,
              Rng *dropout = nullptr);

struct LossParts {
  double entity = 0.0;  // is-entity cross-entropy (0 when no such head)
  double type = 0.0;    // which-type cross-entropy (0 for negatives)
  double total() const { return entity + type; }
};

// Positive: CE(is-entity = entity) + CE(type); negative: CE(is-entity = not
// entity); joint head: a single (|C|+1)-way CE.
LossParts SpanLoss(const HeadOutput &output,
                   std::optional<int> entity_type);

// Losses with gradients accumulated (added) into `grad`.
LossParts SpanLossAndGradient(const ModelParams &params,
                              const EncodedInstance &instance, Rng *dropout,
                              Weights *grad);
double MlmLoss(const ModelParams &params, const MlmExample &example,
               Rng *dropout = nullptr);
double MlmLossAndGradient(const ModelParams &params, const MlmExample &example,
                          Rng *dropout, Weights *grad);

struct BatchOptions {
  bool train_mode = false;
  // Dropout streams are keyed by (seed, step, index in batch).
  uint64_t seed = 0;
  uint64_t step = 0;
  int threads = 1;
};

struct BatchResult {
  double mean_loss = 0.0;
  std::vector<LossParts> losses;  // per instance (span batches only)
};

// Mean-reduced gradient over a batch, written to `grad` (overwritten).
// Throws DivergenceError(-1) if the loss or gradient is not finite.
BatchResult SpanBatchGradient(const ModelParams &params,
                              std::span<const EncodedInstance> batch,
                              const BatchOptions &options, Weights *grad);
BatchResult MlmBatchGradient(const ModelParams &params,
                             std::span<const MlmExample> batch,
                             const BatchOptions &options, Weights *grad);

// Binary checkpoint: magic, JSON header (config, vocabulary, tensor shapes),
// then raw little-endian doubles. Round trips bit-exactly.
void SaveCheckpoint(const ModelParams &params, std::ostream &out);
ModelParams LoadCheckpoint(std::istream &in);
void SaveCheckpointFile(const ModelParams &params, const std::string &path);
ModelParams LoadCheckpointFile(const std::string &path);

}  // namespace fffner

#endif  // FFFNER_ENCODER_H_
