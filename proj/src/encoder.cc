#include "fffner/encoder.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <set>
#include <thread>

#include "fffner/error.h"
#include "fffner/json_io.h"

namespace fffner {
namespace {

constexpr double kNormEpsilon = 1e-5;

Matrix RowVec(int n, double value) { return Matrix::Constant(1, n, value); }

Matrix RandomMatrix(int rows, int cols, double stddev, Rng &rng) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = rng.Normal(0.0, stddev);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Building blocks. Each forward records what its backward needs.

struct NormCache {
  Matrix normalized;
  Eigen::VectorXd inv_std;
};

Matrix LayerNormForward(const Matrix &x, const Matrix &gain,
                        const Matrix &bias, NormCache *cache) {
  const Eigen::Index rows = x.rows();
  const double cols = static_cast<double>(x.cols());
  cache->normalized.resize(x.rows(), x.cols());
  cache->inv_std.resize(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const double mean = x.row(i).sum() / cols;
    const auto centered = x.row(i).array() - mean;
    const double var = centered.square().sum() / cols;
    const double inv_std = 1.0 / std::sqrt(var + kNormEpsilon);
    cache->inv_std(i) = inv_std;
    cache->normalized.row(i) = centered * inv_std;
  }
  Matrix y = cache->normalized.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

Matrix LayerNormBackward(const Matrix &dy, const Matrix &gain,
                         const NormCache &cache, Matrix *dgain, Matrix *dbias) {
  *dgain += (dy.array() * cache.normalized.array()).colwise().sum().matrix();
  *dbias += dy.colwise().sum();
  const Matrix dnorm = dy.array().rowwise() * gain.row(0).array();
  const double cols = static_cast<double>(dy.cols());
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double mean_d = dnorm.row(i).sum() / cols;
    const double mean_dx =
        (dnorm.row(i).array() * cache.normalized.row(i).array()).sum() / cols;
    dx.row(i) = cache.inv_std(i) *
                (dnorm.row(i).array() - mean_d -
                 cache.normalized.row(i).array() * mean_dx);
  }
  return dx;
}

double Gelu(double x) {
  return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
}

double GeluDerivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  const double pdf =
      std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

// Empty matrix when dropout is inactive.
Matrix DropoutMask(Eigen::Index rows, Eigen::Index cols, double p, Rng *rng) {
  if (rng == nullptr || p <= 0.0) return Matrix();
  Matrix mask(rows, cols);
  const double keep_scale = 1.0 / (1.0 - p);
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng->Uniform() < p ? 0.0 : keep_scale;
  }
  return mask;
}

void ApplyMask(Matrix *x, const Matrix &mask) {
  if (mask.size() != 0) x->array() *= mask.array();
}

void SoftmaxRowsInPlace(Matrix *m) {
  for (Eigen::Index i = 0; i < m->rows(); ++i) {
    const double top = m->row(i).maxCoeff();
    m->row(i) = (m->row(i).array() - top).exp();
    m->row(i) /= m->row(i).sum();
  }
}

// Softmax cross-entropy for one logit row; returns the loss and writes
// d loss / d logits.
double CrossEntropy(const Eigen::Ref<const Eigen::RowVectorXd> &logits,
                    int target, Eigen::RowVectorXd *dlogits) {
  const double top = logits.maxCoeff();
  Eigen::RowVectorXd p = (logits.array() - top).exp();
  const double z = p.sum();
  p /= z;
  const double loss = -(logits(target) - top - std::log(z));
  if (dlogits != nullptr) {
    *dlogits = p;
    (*dlogits)(target) -= 1.0;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Transformer forward/backward.

struct LayerCache {
  Matrix input;
  NormCache norm1;
  Matrix normed1;
  Matrix query, key, value;
  std::vector<Matrix> probs;  // per head, L x L
  Matrix context;             // concatenated head outputs
  Matrix attn_mask;
  Matrix mid;
  NormCache norm2;
  Matrix normed2;
  Matrix pre_act;
  Matrix activated;
  Matrix ffn_mask;
};

struct SequenceCache {
  std::vector<int> ids;
  Matrix embed_mask;
  std::vector<LayerCache> layers;
  NormCache final_norm;
  Matrix hidden;
};

void CheckIds(const ModelParams &params, std::span<const int> ids) {
  if (ids.empty()) throw DataError("EmptySequence", "no tokens to encode");
  if (static_cast<int>(ids.size()) > params.config.max_len) {
    throw DataError("SequenceTooLong",
                    "sequence of " + std::to_string(ids.size()) +
                        " tokens exceeds max_len " +
                        std::to_string(params.config.max_len));
  }
  for (int id : ids) {
    if (id < 0 || id >= params.vocab.size()) {
      throw DataError("InvalidTokenId", std::to_string(id));
    }
  }
}

void Forward(const ModelParams &params, std::span<const int> ids, Rng *dropout,
             SequenceCache *cache) {
  CheckIds(params, ids);
  const Weights &w = params.weights;
  const EncoderConfig &cfg = params.config;
  const int len = static_cast<int>(ids.size());
  const int head_dim = cfg.dim / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  cache->ids.assign(ids.begin(), ids.end());
  Matrix h(len, cfg.dim);
  for (int i = 0; i < len; ++i) {
    h.row(i) = w.token_embedding.row(ids[i]) + w.position_embedding.row(i);
  }
  cache->embed_mask = DropoutMask(len, cfg.dim, cfg.dropout, dropout);
  ApplyMask(&h, cache->embed_mask);

  cache->layers.resize(w.layers.size());
  for (size_t l = 0; l < w.layers.size(); ++l) {
    const LayerWeights &lw = w.layers[l];
    LayerCache &lc = cache->layers[l];
    lc.input = h;
    lc.normed1 = LayerNormForward(h, lw.norm1_gain, lw.norm1_bias, &lc.norm1);
    lc.query = lc.normed1 * lw.query_w;
    lc.query.rowwise() += lw.query_b.row(0);
    lc.key = lc.normed1 * lw.key_w;
    lc.key.rowwise() += lw.key_b.row(0);
    lc.value = lc.normed1 * lw.value_w;
    lc.value.rowwise() += lw.value_b.row(0);

    lc.context.resize(len, cfg.dim);
    lc.probs.resize(cfg.heads);
    for (int hd = 0; hd < cfg.heads; ++hd) {
      const auto q = lc.query.middleCols(hd * head_dim, head_dim);
      const auto k = lc.key.middleCols(hd * head_dim, head_dim);
      const auto v = lc.value.middleCols(hd * head_dim, head_dim);
      Matrix &p = lc.probs[hd];
      p.noalias() = (q * k.transpose()) * scale;
      SoftmaxRowsInPlace(&p);
      lc.context.middleCols(hd * head_dim, head_dim).noalias() = p * v;
    }
    Matrix attn = lc.context * lw.output_w;
    attn.rowwise() += lw.output_b.row(0);
    lc.attn_mask = DropoutMask(len, cfg.dim, cfg.dropout, dropout);
    ApplyMask(&attn, lc.attn_mask);
    lc.mid = h + attn;

    lc.normed2 =
        LayerNormForward(lc.mid, lw.norm2_gain, lw.norm2_bias, &lc.norm2);
    lc.pre_act = lc.normed2 * lw.ffn_in_w;
    lc.pre_act.rowwise() += lw.ffn_in_b.row(0);
    lc.activated = lc.pre_act.unaryExpr(&Gelu);
    Matrix ffn = lc.activated * lw.ffn_out_w;
    ffn.rowwise() += lw.ffn_out_b.row(0);
    lc.ffn_mask = DropoutMask(len, cfg.dim, cfg.dropout, dropout);
    ApplyMask(&ffn, lc.ffn_mask);
    h = lc.mid + ffn;
  }
  cache->hidden = LayerNormForward(h, w.final_norm_gain, w.final_norm_bias,
                                   &cache->final_norm);
}

// Back-propagates d loss / d hidden through the encoder into `grad`.
void Backward(const ModelParams &params, const SequenceCache &cache,
              const Matrix &dhidden, Weights *grad) {
  const Weights &w = params.weights;
  const EncoderConfig &cfg = params.config;
  const int head_dim = cfg.dim / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

  Matrix dh = LayerNormBackward(dhidden, w.final_norm_gain, cache.final_norm,
                                &grad->final_norm_gain, &grad->final_norm_bias);

  for (size_t l = w.layers.size(); l-- > 0;) {
    const LayerWeights &lw = w.layers[l];
    const LayerCache &lc = cache.layers[l];
    LayerWeights &lg = grad->layers[l];

    // Feed-forward block.
    Matrix dffn = dh;
    ApplyMask(&dffn, lc.ffn_mask);
    lg.ffn_out_w.noalias() += lc.activated.transpose() * dffn;
    lg.ffn_out_b += dffn.colwise().sum();
    Matrix dpre = dffn * lw.ffn_out_w.transpose();
    dpre.array() *= lc.pre_act.unaryExpr(&GeluDerivative).array();
    lg.ffn_in_w.noalias() += lc.normed2.transpose() * dpre;
    lg.ffn_in_b += dpre.colwise().sum();
    const Matrix dnormed2 = dpre * lw.ffn_in_w.transpose();
    Matrix dmid = dh + LayerNormBackward(dnormed2, lw.norm2_gain, lc.norm2,
                                         &lg.norm2_gain, &lg.norm2_bias);

    // Attention block.
    Matrix dattn = dmid;
    ApplyMask(&dattn, lc.attn_mask);
    lg.output_w.noalias() += lc.context.transpose() * dattn;
    lg.output_b += dattn.colwise().sum();
    const Matrix dcontext = dattn * lw.output_w.transpose();

    Matrix dquery(lc.query.rows(), lc.query.cols());
    Matrix dkey(lc.key.rows(), lc.key.cols());
    Matrix dvalue(lc.value.rows(), lc.value.cols());
    for (int hd = 0; hd < cfg.heads; ++hd) {
      const auto q = lc.query.middleCols(hd * head_dim, head_dim);
      const auto k = lc.key.middleCols(hd * head_dim, head_dim);
      const auto v = lc.value.middleCols(hd * head_dim, head_dim);
      const auto dctx = dcontext.middleCols(hd * head_dim, head_dim);
      const Matrix &p = lc.probs[hd];
      dvalue.middleCols(hd * head_dim, head_dim).noalias() =
          p.transpose() * dctx;
      const Matrix dp = dctx * v.transpose();
      Matrix ds = p.array() * (dp.array().colwise() -
                               (dp.array() * p.array()).rowwise().sum());
      ds *= scale;
      dquery.middleCols(hd * head_dim, head_dim).noalias() = ds * k;
      dkey.middleCols(hd * head_dim, head_dim).noalias() = ds.transpose() * q;
    }
    lg.query_w.noalias() += lc.normed1.transpose() * dquery;
    lg.query_b += dquery.colwise().sum();
    lg.key_w.noalias() += lc.normed1.transpose() * dkey;
    lg.key_b += dkey.colwise().sum();
    lg.value_w.noalias() += lc.normed1.transpose() * dvalue;
    lg.value_b += dvalue.colwise().sum();
    Matrix dnormed1 = dquery * lw.query_w.transpose();
    dnormed1.noalias() += dkey * lw.key_w.transpose();
    dnormed1.noalias() += dvalue * lw.value_w.transpose();
    dh = dmid + LayerNormBackward(dnormed1, lw.norm1_gain, lc.norm1,
                                  &lg.norm1_gain, &lg.norm1_bias);
  }

  ApplyMask(&dh, cache.embed_mask);
  for (size_t i = 0; i < cache.ids.size(); ++i) {
    grad->token_embedding.row(cache.ids[i]) += dh.row(i);
    grad->position_embedding.row(i) += dh.row(i);
  }
}

HeadOutput Heads(const ModelParams &params, const Matrix &hidden,
                 const EncodedInstance &instance) {
  const Weights &w = params.weights;
  HeadOutput out;
  if (instance.is_entity_pos) {
    Eigen::RowVectorXd logits =
        hidden.row(*instance.is_entity_pos) * w.entity_head_w +
        w.entity_head_b.row(0);
    out.is_entity_logits = std::array<double, 2>{logits(0), logits(1)};
  }
  Eigen::RowVectorXd type_logits =
      hidden.row(instance.which_type_pos) * w.type_head_w +
      w.type_head_b.row(0);
  out.which_type_logits.assign(type_logits.data(),
                               type_logits.data() + type_logits.size());
  return out;
}

void CheckPositions(const EncodedInstance &instance) {
  const int len = static_cast<int>(instance.ids.size());
  auto bad = [len](int pos) { return pos < 0 || pos >= len; };
  if (bad(instance.which_type_pos) ||
      (instance.is_entity_pos && bad(*instance.is_entity_pos))) {
    throw DataError("PositionOutOfRange",
                    "slot position outside instance of length " +
                        std::to_string(len));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary(std::vector<std::string> tokens,
                       std::string_view mask_token)
    : tokens_(std::move(tokens)) {
  for (int i = 0; i < size(); ++i) {
    if (!index_.emplace(tokens_[i], i).second) {
      throw DataError("InvalidVocabulary", "duplicate token " + tokens_[i]);
    }
  }
  for (std::string_view special :
       {kPadToken, kUnkToken, mask_token, kOpenBracket, kCloseBracket,
        kTypeSeparator}) {
    if (!Contains(special)) {
      throw DataError("InvalidVocabulary",
                      "missing special token " + std::string(special));
    }
  }
  pad_id_ = index_.at(std::string(kPadToken));
  unk_id_ = index_.at(std::string(kUnkToken));
  mask_id_ = index_.at(std::string(mask_token));
}

Vocabulary Vocabulary::Build(const std::vector<Sentence> &sentences,
                             std::string_view mask_token) {
  std::vector<std::string> tokens;
  for (std::string_view t :
       {kPadToken, kUnkToken, mask_token, kOpenBracket, kCloseBracket,
        kTypeSeparator, kSpanLiteral, kTypeLiteral}) {
    tokens.emplace_back(t);
  }
  std::set<std::string> seen(tokens.begin(), tokens.end());
  std::set<std::string> words;
  for (const Sentence &s : sentences) {
    for (const std::string &t : s.tokens) {
      if (!seen.count(t)) words.insert(t);
    }
  }
  tokens.insert(tokens.end(), words.begin(), words.end());
  return Vocabulary(std::move(tokens), mask_token);
}

int Vocabulary::Id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_id_ : it->second;
}

bool Vocabulary::Contains(std::string_view token) const {
  return index_.count(std::string(token)) > 0;
}

// ---------------------------------------------------------------------------
// Weights

void ValidateConfig(const EncoderConfig &config) {
  if (config.dim < 1 || config.layers < 0 || config.heads < 1 ||
      config.dim % config.heads != 0) {
    throw UsageError("InvalidEncoderConfig",
                     "dim must be positive and divisible by heads");
  }
  if (config.ffn_dim < 1 || config.max_len < 1 || config.type_classes < 1) {
    throw UsageError("InvalidEncoderConfig",
                     "ffn_dim, max_len and type_classes must be positive");
  }
  if (!(config.dropout >= 0.0 && config.dropout < 1.0)) {
    throw UsageError("InvalidEncoderConfig", "dropout must be in [0, 1)");
  }
}

void Weights::ForEach(
    const std::function<void(const std::string &, Matrix &)> &f) {
  f("token_embedding", token_embedding);
  f("position_embedding", position_embedding);
  for (size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layer" + std::to_string(i) + ".";
    LayerWeights &l = layers[i];
    f(p + "norm1_gain", l.norm1_gain);
    f(p + "norm1_bias", l.norm1_bias);
    f(p + "query_w", l.query_w);
    f(p + "query_b", l.query_b);
    f(p + "key_w", l.key_w);
    f(p + "key_b", l.key_b);
    f(p + "value_w", l.value_w);
    f(p + "value_b", l.value_b);
    f(p + "output_w", l.output_w);
    f(p + "output_b", l.output_b);
    f(p + "norm2_gain", l.norm2_gain);
    f(p + "norm2_bias", l.norm2_bias);
    f(p + "ffn_in_w", l.ffn_in_w);
    f(p + "ffn_in_b", l.ffn_in_b);
    f(p + "ffn_out_w", l.ffn_out_w);
    f(p + "ffn_out_b", l.ffn_out_b);
  }
  f("final_norm_gain", final_norm_gain);
  f("final_norm_bias", final_norm_bias);
  f("entity_head_w", entity_head_w);
  f("entity_head_b", entity_head_b);
  f("type_head_w", type_head_w);
  f("type_head_b", type_head_b);
  f("mlm_bias", mlm_bias);
}

void Weights::ForEach(
    const std::function<void(const std::string &, const Matrix &)> &f) const {
  const_cast<Weights *>(this)->ForEach(
      [&](const std::string &name, Matrix &m) { f(name, m); });
}

Weights Weights::ZerosLike() const {
  Weights zeros = *this;
  zeros.SetZero();
  return zeros;
}

void Weights::SetZero() {
  ForEach([](const std::string &, Matrix &m) { m.setZero(); });
}

void Weights::AddScaled(const Weights &other, double scale) {
  std::vector<const Matrix *> theirs;
  other.ForEach([&](const std::string &, const Matrix &m) { theirs.push_back(&m); });
  size_t i = 0;
  ForEach([&](const std::string &, Matrix &m) { m += scale * *theirs[i++]; });
}

void Weights::Scale(double factor) {
  ForEach([&](const std::string &, Matrix &m) { m *= factor; });
}

double Weights::SquaredNorm() const {
  double total = 0.0;
  ForEach([&](const std::string &, const Matrix &m) { total += m.squaredNorm(); });
  return total;
}

bool Weights::AllFinite() const {
  bool finite = true;
  ForEach([&](const std::string &, const Matrix &m) {
    finite = finite && m.allFinite();
  });
  return finite;
}

size_t Weights::ParameterCount() const {
  size_t count = 0;
  ForEach([&](const std::string &, const Matrix &m) { count += m.size(); });
  return count;
}

bool Weights::operator==(const Weights &other) const {
  std::vector<const Matrix *> theirs;
  other.ForEach([&](const std::string &, const Matrix &m) { theirs.push_back(&m); });
  size_t i = 0;
  bool equal = true;
  ForEach([&](const std::string &, const Matrix &m) {
    if (i >= theirs.size()) {
      equal = false;
      return;
    }
    const Matrix &o = *theirs[i++];
    equal = equal && m.rows() == o.rows() && m.cols() == o.cols() &&
            std::memcmp(m.data(), o.data(), sizeof(double) * m.size()) == 0;
  });
  return equal && i == theirs.size();
}

ModelParams InitModel(const EncoderConfig &config, Vocabulary vocab,
                      uint64_t seed) {
  ValidateConfig(config);
  ModelParams params;
  params.config = config;
  params.vocab = std::move(vocab);
  Rng rng(seed, {0x494e4954ULL});
  const int d = config.dim;
  const double sd = config.init_std;
  Weights &w = params.weights;
  w.token_embedding = RandomMatrix(params.vocab.size(), d, sd, rng);
  w.position_embedding = RandomMatrix(config.max_len, d, sd, rng);
  w.layers.resize(config.layers);
  for (LayerWeights &l : w.layers) {
    l.norm1_gain = RowVec(d, 1.0);
    l.norm1_bias = RowVec(d, 0.0);
    l.query_w = RandomMatrix(d, d, sd, rng);
    l.query_b = RowVec(d, 0.0);
    l.key_w = RandomMatrix(d, d, sd, rng);
    l.key_b = RowVec(d, 0.0);
    l.value_w = RandomMatrix(d, d, sd, rng);
    l.value_b = RowVec(d, 0.0);
    l.output_w = RandomMatrix(d, d, sd, rng);
    l.output_b = RowVec(d, 0.0);
    l.norm2_gain = RowVec(d, 1.0);
    l.norm2_bias = RowVec(d, 0.0);
    l.ffn_in_w = RandomMatrix(d, config.ffn_dim, sd, rng);
    l.ffn_in_b = RowVec(config.ffn_dim, 0.0);
    l.ffn_out_w = RandomMatrix(config.ffn_dim, d, sd, rng);
    l.ffn_out_b = RowVec(d, 0.0);
  }
  w.final_norm_gain = RowVec(d, 1.0);
  w.final_norm_bias = RowVec(d, 0.0);
  w.mlm_bias = RowVec(params.vocab.size(), 0.0);
  ResetHeads(&params, config.type_classes, seed);
  return params;
}

void ResetHeads(ModelParams *params, int type_classes, uint64_t seed,
                bool zero) {
  if (type_classes < 1) {
    throw UsageError("InvalidEncoderConfig", "type head needs >= 1 class");
  }
  params->config.type_classes = type_classes;
  const int d = params->config.dim;
  Weights &w = params->weights;
  Rng rng(seed, {0x48454144ULL});
  const double sd = zero ? 0.0 : params->config.init_std;
  w.entity_head_w = RandomMatrix(d, 2, sd, rng);
  w.entity_head_b = RowVec(2, 0.0);
  w.type_head_w = RandomMatrix(d, type_classes, sd, rng);
  w.type_head_b = RowVec(type_classes, 0.0);
}

// ---------------------------------------------------------------------------
// Scoring and losses

EncodedInstance EncodeInstance(const ModelParams &params,
                               const FormulatedInstance &instance) {
  if (static_cast<int>(instance.tokens.size()) > params.config.max_len) {
    throw DataError("SequenceTooLong",
                    "instance for sentence " +
                        std::to_string(instance.sentence_id) + " has " +
                        std::to_string(instance.tokens.size()) +
                        " tokens, max_len is " +
                        std::to_string(params.config.max_len));
  }
  if (!instance.which_type_pos) {
    throw DataError("PositionOutOfRange", "instance has no which-type slot");
  }
  EncodedInstance encoded;
  encoded.ids.reserve(instance.tokens.size());
  for (const std::string &t : instance.tokens) {
    encoded.ids.push_back(params.vocab.Id(t));
  }
  encoded.is_entity_pos = instance.is_entity_pos;
  encoded.which_type_pos = *instance.which_type_pos;
  encoded.entity_type = instance.entity_type;
  CheckPositions(encoded);
  return encoded;
}

Matrix Encode(const ModelParams &params, std::span<const int> ids,
              Rng *dropout) {
  SequenceCache cache;
  Forward(params, ids, dropout, &cache);
  return std::move(cache.hidden);
}

HeadOutput Score(const ModelParams &params, const EncodedInstance &instance,
                 Rng *dropout) {
  CheckPositions(instance);
  SequenceCache cache;
  Forward(params, instance.ids, dropout, &cache);
  return Heads(params, cache.hidden, instance);
}

namespace {

// Computes the span loss and, if requested, the logit gradients.
LossParts SpanLossImpl(const HeadOutput &output, std::optional<int> entity_type,
                       Eigen::RowVectorXd *dentity, Eigen::RowVectorXd *dtype) {
  LossParts parts;
  const int width = static_cast<int>(output.which_type_logits.size());
  const Eigen::Map<const Eigen::RowVectorXd> type_logits(
      output.which_type_logits.data(), width);
  if (output.is_entity_logits) {
    const Eigen::Map<const Eigen::RowVectorXd> entity_logits(
        output.is_entity_logits->data(), 2);
    parts.entity =
        CrossEntropy(entity_logits, entity_type ? 0 : 1, dentity);
    if (entity_type) {
      if (*entity_type < 0 || *entity_type >= width) {
        throw DataError("LabelMismatch", "type label outside head width");
      }
      parts.type = CrossEntropy(type_logits, *entity_type, dtype);
    } else if (dtype != nullptr) {
      *dtype = Eigen::RowVectorXd::Zero(width);
    }
  } else {
    // Joint head: the last class means "not an entity".
    const int target = entity_type ? *entity_type : width - 1;
    if (target < 0 || target >= width ||
        (entity_type && *entity_type == width - 1)) {
      throw DataError("LabelMismatch", "type label outside joint head width");
    }
    parts.type = CrossEntropy(type_logits, target, dtype);
  }
  return parts;
}

}  // namespace

LossParts SpanLoss(const HeadOutput &output, std::optional<int> entity_type) {
  return SpanLossImpl(output, entity_type, nullptr, nullptr);
}

LossParts SpanLossAndGradient(const ModelParams &params,
                              const EncodedInstance &instance, Rng *dropout,
                              Weights *grad) {
  CheckPositions(instance);
  SequenceCache cache;
  Forward(params, instance.ids, dropout, &cache);
  const HeadOutput out = Heads(params, cache.hidden, instance);
  Eigen::RowVectorXd dentity, dtype;
  const LossParts parts =
      SpanLossImpl(out, instance.entity_type, &dentity, &dtype);

  const Weights &w = params.weights;
  Matrix dhidden = Matrix::Zero(cache.hidden.rows(), cache.hidden.cols());
  if (instance.is_entity_pos) {
    const int pos = *instance.is_entity_pos;
    grad->entity_head_w.noalias() += cache.hidden.row(pos).transpose() * dentity;
    grad->entity_head_b += dentity;
    dhidden.row(pos) += dentity * w.entity_head_w.transpose();
  }
  const bool trains_type = instance.entity_type || !instance.is_entity_pos;
  if (trains_type) {
    const int pos = instance.which_type_pos;
    grad->type_head_w.noalias() += cache.hidden.row(pos).transpose() * dtype;
    grad->type_head_b += dtype;
    dhidden.row(pos) += dtype * w.type_head_w.transpose();
  }
  Backward(params, cache, dhidden, grad);
  return parts;
}

namespace {

double MlmImpl(const ModelParams &params, const MlmExample &example,
               Rng *dropout, Weights *grad) {
  if (example.positions.size() != example.targets.size() ||
      example.positions.empty()) {
    throw DataError("InvalidMlmExample", "positions/targets mismatch or empty");
  }
  SequenceCache cache;
  Forward(params, example.ids, dropout, &cache);
  const Weights &w = params.weights;
  const int m = static_cast<int>(example.positions.size());
  Matrix selected(m, params.config.dim);
  for (int i = 0; i < m; ++i) {
    const int pos = example.positions[i];
    if (pos < 0 || pos >= static_cast<int>(example.ids.size())) {
      throw DataError("PositionOutOfRange", "mlm position");
    }
    selected.row(i) = cache.hidden.row(pos);
  }
  Matrix logits = selected * w.token_embedding.transpose();
  logits.rowwise() += w.mlm_bias.row(0);

  double loss = 0.0;
  Matrix dlogits(m, logits.cols());
  for (int i = 0; i < m; ++i) {
    Eigen::RowVectorXd d;
    loss += CrossEntropy(logits.row(i), example.targets[i],
                         grad ? &d : nullptr);
    if (grad) dlogits.row(i) = d / m;
  }
  loss /= m;
  if (grad == nullptr) return loss;

  grad->token_embedding.noalias() += dlogits.transpose() * selected;
  grad->mlm_bias += dlogits.colwise().sum();
  const Matrix dselected = dlogits * w.token_embedding;
  Matrix dhidden = Matrix::Zero(cache.hidden.rows(), cache.hidden.cols());
  for (int i = 0; i < m; ++i) {
    dhidden.row(example.positions[i]) += dselected.row(i);
  }
  Backward(params, cache, dhidden, grad);
  return loss;
}

template <typename Example, typename Fn>
BatchResult BatchGradient(const ModelParams &params,
                          std::span<const Example> batch,
                          const BatchOptions &options, Weights *grad, Fn fn) {
  if (batch.empty()) throw DataError("EmptyBatch", "batch has no examples");
  const size_t n = batch.size();
  // The chunk layout depends only on the batch size, so the summation
  // order, and therefore the result, is independent of the thread count.
  const size_t chunks = std::min<size_t>(n, 8);
  std::vector<Weights> partial(chunks, params.weights.ZerosLike());
  std::vector<LossParts> losses(n);

  auto run_chunk = [&](size_t c) {
    const size_t begin = n * c / chunks;
    const size_t end = n * (c + 1) / chunks;
    for (size_t i = begin; i < end; ++i) {
      if (options.train_mode) {
        Rng rng(options.seed, {0x44524f50ULL, options.step, i});
        losses[i] = fn(batch[i], &rng, &partial[c]);
      } else {
        losses[i] = fn(batch[i], nullptr, &partial[c]);
      }
    }
  };
  const int threads =
      std::max(1, std::min<int>(options.threads, static_cast<int>(chunks)));
  if (threads == 1) {
    for (size_t c = 0; c < chunks; ++c) run_chunk(c);
  } else {
    std::vector<std::thread> workers;
    for (int t = 0; t < threads; ++t) {
      workers.emplace_back([&, t] {
        for (size_t c = t; c < chunks; c += threads) run_chunk(c);
      });
    }
    for (std::thread &worker : workers) worker.join();
  }

  *grad = std::move(partial[0]);
  for (size_t c = 1; c < chunks; ++c) grad->AddScaled(partial[c], 1.0);
  grad->Scale(1.0 / static_cast<double>(n));

  BatchResult result;
  double total = 0.0;
  for (const LossParts &p : losses) total += p.total();
  result.mean_loss = total / static_cast<double>(n);
  result.losses = std::move(losses);
  if (!std::isfinite(result.mean_loss) || !grad->AllFinite()) {
    throw DivergenceError(-1, "non-finite loss or gradient");
  }
  return result;
}

}  // namespace

double MlmLoss(const ModelParams &params, const MlmExample &example,
               Rng *dropout) {
  return MlmImpl(params, example, dropout, nullptr);
}

double MlmLossAndGradient(const ModelParams &params, const MlmExample &example,
                          Rng *dropout, Weights *grad) {
  return MlmImpl(params, example, dropout, grad);
}

BatchResult SpanBatchGradient(const ModelParams &params,
                              std::span<const EncodedInstance> batch,
                              const BatchOptions &options, Weights *grad) {
  return BatchGradient(params, batch, options, grad,
                       [&](const EncodedInstance &x, Rng *rng, Weights *g) {
                         return SpanLossAndGradient(params, x, rng, g);
                       });
}

BatchResult MlmBatchGradient(const ModelParams &params,
                             std::span<const MlmExample> batch,
                             const BatchOptions &options, Weights *grad) {
  BatchResult result = BatchGradient(
      params, batch, options, grad,
      [&](const MlmExample &x, Rng *rng, Weights *g) {
        return LossParts{0.0, MlmImpl(params, x, rng, g)};
      });
  result.losses.clear();
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kMagic[8] = {'F', 'F', 'F', 'N', 'E', 'R', 'C', 'K'};
constexpr int kCheckpointVersion = 1;

Json ConfigToJson(const EncoderConfig &c) {
  return {{"dim", c.dim},         {"layers", c.layers},
          {"heads", c.heads},     {"ffn_dim", c.ffn_dim},
          {"max_len", c.max_len}, {"dropout", c.dropout},
          {"type_classes", c.type_classes}, {"init_std", c.init_std}};
}

EncoderConfig ConfigFromJson(const Json &j) {
  EncoderConfig c;
  c.dim = j.at("dim").get<int>();
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.ffn_dim = j.at("ffn_dim").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout = j.at("dropout").get<double>();
  c.type_classes = j.at("type_classes").get<int>();
  c.init_std = j.at("init_std").get<double>();
  return c;
}

}  // namespace

void SaveCheckpoint(const ModelParams &params, std::ostream &out) {
  Json tensors = Json::array();
  params.weights.ForEach([&](const std::string &name, const Matrix &m) {
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}});
  });
  const Json header = {{"version", kCheckpointVersion},
                       {"config", ConfigToJson(params.config)},
                       {"vocab", params.vocab.tokens()},
                       {"mask_token", params.vocab.mask_token()},
                       {"tensors", tensors}};
  const std::string text = header.dump();
  const uint64_t size = text.size();
  out.write(kMagic, sizeof(kMagic));
  out.write(reinterpret_cast<const char *>(&size), sizeof(size));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  params.weights.ForEach([&](const std::string &, const Matrix &m) {
    out.write(reinterpret_cast<const char *>(m.data()),
              static_cast<std::streamsize>(sizeof(double) * m.size()));
  });
  if (!out) throw DataError("IoError", "checkpoint write failed");
}

ModelParams LoadCheckpoint(std::istream &in) {
  char magic[sizeof(kMagic)];
  uint64_t size = 0;
  in.read(magic, sizeof(magic));
  in.read(reinterpret_cast<char *>(&size), sizeof(size));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0 ||
      size > (1ULL << 32)) {
    throw DataError("SchemaMismatch", "not a checkpoint");
  }
  std::string text(size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(size));
  ModelParams params;
  Json header;
  try {
    header = Json::parse(text);
    if (header.at("version").get<int>() != kCheckpointVersion) {
      throw DataError("SchemaMismatch", "unsupported checkpoint version");
    }
    params.config = ConfigFromJson(header.at("config"));
    params.vocab = Vocabulary(header.at("vocab").get<std::vector<std::string>>(),
                              header.at("mask_token").get<std::string>());
  } catch (const Json::exception &e) {
    throw DataError("SchemaMismatch", std::string("checkpoint header: ") + e.what());
  }
  ValidateConfig(params.config);
  params.weights.layers.resize(params.config.layers);
  const Json &tensors = header.at("tensors");
  size_t index = 0;
  params.weights.ForEach([&](const std::string &name, Matrix &m) {
    if (index >= tensors.size() || tensors[index]["name"] != name) {
      throw DataError("SchemaMismatch", "unexpected tensor " + name);
    }
    m.resize(tensors[index]["rows"].get<Eigen::Index>(),
             tensors[index]["cols"].get<Eigen::Index>());
    in.read(reinterpret_cast<char *>(m.data()),
            static_cast<std::streamsize>(sizeof(double) * m.size()));
    ++index;
  });
  if (!in || index != tensors.size()) {
    throw DataError("SchemaMismatch", "truncated checkpoint");
  }
  return params;
}

void SaveCheckpointFile(const ModelParams &params, const std::string &path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("IoError", "cannot write " + path);
  SaveCheckpoint(params, out);
}

ModelParams LoadCheckpointFile(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("IoError", "cannot read " + path);
  return LoadCheckpoint(in);
}

}  // namespace fffner
