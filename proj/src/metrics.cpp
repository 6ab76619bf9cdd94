#include "depgcn/metrics.hpp"

#include "depgcn/errors.hpp"

#include <cmath>
#include <numeric>

namespace depgcn {

namespace {

double ratio(std::int64_t num, std::int64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

ConfusionMatrix::ConfusionMatrix(int classes) : classes_(classes) {
  if (classes < 1) throw ConfigError("confusion matrix needs at least one class");
  counts_.assign(static_cast<std::size_t>(classes) * static_cast<std::size_t>(classes), 0);
}

std::int64_t ConfusionMatrix::operator()(int true_class, int predicted) const {
  return counts_[static_cast<std::size_t>(true_class * classes_ + predicted)];
}

void ConfusionMatrix::add(int true_class, int predicted) {
  if (true_class < 0 || true_class >= classes_ || predicted < 0 || predicted >= classes_) {
    throw InputError("class index out of range for confusion matrix");
  }
  ++counts_[static_cast<std::size_t>(true_class * classes_ + predicted)];
}

std::int64_t ConfusionMatrix::total() const { return std::accumulate(counts_.begin(), counts_.end(), std::int64_t{0}); }

std::int64_t ConfusionMatrix::trace() const {
  std::int64_t t = 0;
  for (int c = 0; c < classes_; ++c) t += (*this)(c, c);
  return t;
}

std::int64_t ConfusionMatrix::false_positives(int c) const {
  std::int64_t s = 0;
  for (int t = 0; t < classes_; ++t) {
    if (t != c) s += (*this)(t, c);
  }
  return s;
}

std::int64_t ConfusionMatrix::false_negatives(int c) const {
  std::int64_t s = 0;
  for (int p = 0; p < classes_; ++p) {
    if (p != c) s += (*this)(c, p);
  }
  return s;
}

ConfusionMatrix confusion(std::span<const ClassPair> pairs, int classes) {
  ConfusionMatrix cm(classes);
  for (const auto& [t, p] : pairs) cm.add(t, p);
  return cm;
}

std::vector<PrfScores> per_class_prf(const ConfusionMatrix& cm) {
  std::vector<PrfScores> out;
  out.reserve(static_cast<std::size_t>(cm.classes()));
  for (int c = 0; c < cm.classes(); ++c) {
    const auto tp = cm.true_positives(c);
    PrfScores s;
    s.precision = ratio(tp, tp + cm.false_positives(c));
    s.recall = ratio(tp, tp + cm.false_negatives(c));
    s.f1 = harmonic(s.precision, s.recall);
    out.push_back(s);
  }
  return out;
}

PrfScores macro_prf(const ConfusionMatrix& cm) {
  PrfScores m;
  for (const auto& s : per_class_prf(cm)) {
    m.precision += s.precision;
    m.recall += s.recall;
  }
  m.precision /= cm.classes();
  m.recall /= cm.classes();
  m.f1 = harmonic(m.precision, m.recall);
  return m;
}

double micro_prf(const ConfusionMatrix& cm) {
  if (cm.total() == 0) throw InputError("micro precision of an empty confusion matrix");
  std::int64_t tp = 0, fp = 0;
  for (int c = 0; c < cm.classes(); ++c) {
    tp += cm.true_positives(c);
    fp += cm.false_positives(c);
  }
  return ratio(tp, tp + fp);
}

RegressionScores mae_rmse(std::span<const std::pair<double, double>> pairs) {
  if (pairs.empty()) throw InputError("mae_rmse: no pairs");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (const auto& [truth, pred] : pairs) {
    const double e = pred - truth;
    abs_sum += std::abs(e);
    sq_sum += e * e;
  }
  const auto n = static_cast<double>(pairs.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

MetricsReport evaluate(std::span<const ClassPair> pairs, int classes) {
  MetricsReport r;
  r.confusion = confusion(pairs, classes);
  r.per_class = per_class_prf(r.confusion);
  r.macro = macro_prf(r.confusion);
  r.micro_precision = micro_prf(r.confusion);
  r.accuracy = ratio(r.confusion.trace(), r.confusion.total());
  return r;
}

}  // namespace depgcn
