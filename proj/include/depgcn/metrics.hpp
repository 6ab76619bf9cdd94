#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace depgcn {

/// counts(t, p) = subjects of true class t predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes);

  int classes() const { return classes_; }
  std::int64_t operator()(int true_class, int predicted) const;
  void add(int true_class, int predicted);
  std::int64_t total() const;
  std::int64_t trace() const;
  std::int64_t true_positives(int c) const { return (*this)(c, c); }
  std::int64_t false_positives(int c) const;
  std::int64_t false_negatives(int c) const;

  bool operator==(const ConfusionMatrix&) const = default;

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
};

using ClassPair = std::pair<int, int>;  // (true, predicted)

ConfusionMatrix confusion(std::span<const ClassPair> pairs, int classes);

struct PrfScores {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Per-class precision and recall; a zero denominator yields 0.
std::vector<PrfScores> per_class_prf(const ConfusionMatrix& cm);

/// Class-averaged precision and recall; F1 is the harmonic mean of those two
/// averages, not the mean of per-class F1.
PrfScores macro_prf(const ConfusionMatrix& cm);

/// Pooled TP / (TP + FP), i.e. trace / total. Throws on an empty matrix.
double micro_prf(const ConfusionMatrix& cm);

struct RegressionScores {
  double mae = 0.0;
  double rmse = 0.0;
};

RegressionScores mae_rmse(std::span<const std::pair<double, double>> pairs);

struct MetricsReport {
  ConfusionMatrix confusion{1};
  double accuracy = 0.0;
  std::vector<PrfScores> per_class;
  PrfScores macro;
  double micro_precision = 0.0;
  std::optional<RegressionScores> regression;
};

MetricsReport evaluate(std::span<const ClassPair> pairs, int classes);

}  // namespace depgcn
