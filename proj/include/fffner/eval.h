#ifndef FFFNER_EVAL_H_
#define FFFNER_EVAL_H_

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fffner/corpus.h"

namespace fffner {

struct SpanCounts {
  int64_t gold = 0;
  int64_t predicted = 0;
  int64_t correct = 0;
};

struct FoldScore {
  int fold_id = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  SpanCounts counts;
  // A diverged fold is reported but left out of the aggregate.
  bool diverged = false;
};

// P = correct / predicted (0 when nothing is predicted), R = correct / gold
// (0 when there is no gold), F1 = 2PR / (P + R) (0 when P + R = 0).
FoldScore ScoreFromCounts(const SpanCounts &counts, int fold_id = 0);

// Exact-match (start, end, type) micro scores over aligned sentences.
FoldScore SpanF1(const Corpus &gold,
                 const std::vector<std::vector<TypedSpan>> &predicted,
                 int fold_id = 0);

struct EvalReport {
  std::vector<FoldScore> folds;
  double mean_f1 = 0.0;
  // Sample standard deviation; absent with fewer than two folds.
  std::optional<double> std_f1;
  int fold_count = 0;  // folds that entered the aggregate
};

EvalReport Aggregate(std::vector<FoldScore> folds);

enum class SignificanceTest { kPairedT, kPermutation };

struct Comparison {
  double p_value = 1.0;
  double mean_difference = 0.0;  // mean of a.f1 - b.f1 over shared folds
  bool significant(double level = 0.05) const { return p_value < level; }
};

// Two-sided test over per-fold F1 differences. All-zero differences give
// p = 1; a nonzero constant difference gives p = 0.
Comparison Compare(const EvalReport &a, const EvalReport &b,
                   SignificanceTest test = SignificanceTest::kPairedT);

// Two-sided paired tests on raw difference vectors.
double PairedTTestPValue(const std::vector<double> &differences);
double SignFlipPermutationPValue(const std::vector<double> &differences);

// fold_id,precision,recall,f1,gold,predicted,correct followed by "mean" and
// "std" rows.
void WriteReportCsv(const EvalReport &report, std::ostream &out);

std::string FormatFixed(double value, int digits = 6);

}  // namespace fffner

#endif  // FFFNER_EVAL_H_
