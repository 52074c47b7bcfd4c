#include "fffner/eval.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <set>

#include <boost/math/distributions/students_t.hpp>

#include "fffner/error.h"

namespace fffner {

FoldScore ScoreFromCounts(const SpanCounts &counts, int fold_id) {
  FoldScore score;
  score.fold_id = fold_id;
  score.counts = counts;
  score.precision = counts.predicted > 0
                        ? static_cast<double>(counts.correct) / counts.predicted
                        : 0.0;
  score.recall =
      counts.gold > 0 ? static_cast<double>(counts.correct) / counts.gold : 0.0;
  const double sum = score.precision + score.recall;
  score.f1 = sum > 0.0 ? 2.0 * score.precision * score.recall / sum : 0.0;
  return score;
}

FoldScore SpanF1(const Corpus &gold,
                 const std::vector<std::vector<TypedSpan>> &predicted,
                 int fold_id) {
  if (gold.sentences.size() != predicted.size()) {
    throw DataError("IdMismatch",
                    std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(gold.sentences.size()) + " sentences");
  }
  SpanCounts counts;
  for (size_t i = 0; i < predicted.size(); ++i) {
    const std::set<TypedSpan> truth(gold.sentences[i].entities.begin(),
                                    gold.sentences[i].entities.end());
    std::set<TypedSpan> seen;
    for (const TypedSpan &p : predicted[i]) {
      if (!seen.insert(p).second) {
        throw DataError("DuplicatePrediction",
                        "sentence " + std::to_string(i) + " repeats a span");
      }
      if (truth.count(p)) ++counts.correct;
    }
    counts.gold += static_cast<int64_t>(truth.size());
    counts.predicted += static_cast<int64_t>(predicted[i].size());
  }
  return ScoreFromCounts(counts, fold_id);
}

namespace {

// Exactly zero when all values are equal, even if the mean is not exact.
double SampleStd(const std::vector<double> &values, double mean) {
  if (std::adjacent_find(values.begin(), values.end(),
                         std::not_equal_to<>()) == values.end()) {
    return 0.0;
  }
  double ss = 0.0;
  for (double x : values) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / (values.size() - 1.0));
}

}  // namespace

EvalReport Aggregate(std::vector<FoldScore> folds) {
  EvalReport report;
  report.folds = std::move(folds);
  std::vector<double> f1;
  for (const FoldScore &f : report.folds) {
    if (!f.diverged) f1.push_back(f.f1);
  }
  if (f1.empty()) throw DataError("NoFolds", "no completed folds to aggregate");
  report.fold_count = static_cast<int>(f1.size());
  const double n = static_cast<double>(f1.size());
  report.mean_f1 = std::accumulate(f1.begin(), f1.end(), 0.0) / n;
  if (f1.size() >= 2) {
    report.std_f1 = SampleStd(f1, report.mean_f1);
  }
  return report;
}

double PairedTTestPValue(const std::vector<double> &differences) {
  if (differences.size() < 2) {
    throw DataError("TooFewFolds", "paired test needs >= 2 folds");
  }
  const double n = static_cast<double>(differences.size());
  const double mean =
      std::accumulate(differences.begin(), differences.end(), 0.0) / n;
  const double sd = SampleStd(differences, mean);
  const bool all_zero = std::all_of(differences.begin(), differences.end(),
                                    [](double d) { return d == 0.0; });
  if (all_zero) return 1.0;
  if (sd == 0.0) return 0.0;
  const double t = mean / (sd / std::sqrt(n));
  boost::math::students_t dist(n - 1.0);
  return 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t)));
}

double SignFlipPermutationPValue(const std::vector<double> &differences) {
  const size_t n = differences.size();
  if (n < 2) throw DataError("TooFewFolds", "paired test needs >= 2 folds");
  if (n > 24) throw UsageError("TooManyFolds", "exact sign-flip test limit is 24");
  const double observed =
      std::fabs(std::accumulate(differences.begin(), differences.end(), 0.0));
  const double tolerance = 1e-12 * (1.0 + observed);
  uint64_t extreme = 0;
  const uint64_t total = 1ULL << n;
  for (uint64_t mask = 0; mask < total; ++mask) {
    double sum = 0.0;
    for (size_t i = 0; i < n; ++i) {
      sum += (mask >> i) & 1U ? -differences[i] : differences[i];
    }
    if (std::fabs(sum) >= observed - tolerance) ++extreme;
  }
  return static_cast<double>(extreme) / static_cast<double>(total);
}

Comparison Compare(const EvalReport &a, const EvalReport &b,
                   SignificanceTest test) {
  std::map<int, double> left, right;
  for (const FoldScore &f : a.folds) {
    if (!f.diverged) left[f.fold_id] = f.f1;
  }
  for (const FoldScore &f : b.folds) {
    if (!f.diverged) right[f.fold_id] = f.f1;
  }
  if (left.size() != right.size() ||
      !std::equal(left.begin(), left.end(), right.begin(),
                  [](const auto &x, const auto &y) { return x.first == y.first; })) {
    throw DataError("FoldMismatch", "reports do not share fold ids");
  }
  std::vector<double> differences;
  for (const auto &[fold, f1] : left) differences.push_back(f1 - right[fold]);
  Comparison result;
  result.mean_difference =
      differences.empty()
          ? 0.0
          : std::accumulate(differences.begin(), differences.end(), 0.0) /
                static_cast<double>(differences.size());
  result.p_value = test == SignificanceTest::kPairedT
                       ? PairedTTestPValue(differences)
                       : SignFlipPermutationPValue(differences);
  return result;
}

std::string FormatFixed(double value, int digits) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.*f", digits, value);
  return buffer;
}

void WriteReportCsv(const EvalReport &report, std::ostream &out) {
  out << "fold_id,precision,recall,f1,gold,predicted,correct\n";
  for (const FoldScore &f : report.folds) {
    out << f.fold_id << ',';
    if (f.diverged) {
      out << "diverged,,,,,\n";
      continue;
    }
    out << FormatFixed(f.precision) << ',' << FormatFixed(f.recall) << ','
        << FormatFixed(f.f1) << ',' << f.counts.gold << ','
        << f.counts.predicted << ',' << f.counts.correct << '\n';
  }
  out << "mean,,," << FormatFixed(report.mean_f1) << ",,,\n";
  out << "std,,," << (report.std_f1 ? FormatFixed(*report.std_f1) : "") << ",,,\n";
}

}  // namespace fffner
