#include "depgcn/errors.hpp"
#include "depgcn/runconfig.hpp"
#include "depgcn/synth.hpp"
#include "depgcn/trainer.hpp"

#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

using namespace depgcn;

namespace {

SynthDataset small_data(std::uint64_t seed, std::vector<int> counts = {3, 3, 3}, double flip = 0.0) {
  SynthConfig cfg;
  cfg.channels = 4;
  cfg.epochs_per_subject = 8;
  cfg.counts_per_class = std::move(counts);
  cfg.flip_fraction = flip;
  cfg.seed = seed;
  return generate(cfg);
}

TrainConfig small_train(int classes, int epochs = 20) {
  TrainConfig cfg = default_train_config(classes);
  cfg.total_epochs = epochs;
  cfg.model.hidden = 4;
  return cfg;
}

// Multinomial logistic regression on flattened features, full-batch
// gradient descent. A baseline that shares no code with the model.
double softmax_baseline_accuracy(const std::vector<SubjectDataset>& subjects, int classes) {
  const Eigen::Index dim = subjects[0].channels() * subjects[0].bands();
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(classes, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(classes);
  std::size_t total = 0;
  for (const auto& s : subjects) total += s.samples.size();
  for (int iter = 0; iter < 300; ++iter) {
    Eigen::MatrixXd gw = Eigen::MatrixXd::Zero(classes, dim);
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(classes);
    for (const auto& s : subjects) {
      for (const auto& smp : s.samples) {
        const Eigen::VectorXd x = smp.features.reshaped<Eigen::RowMajor>();
        Eigen::VectorXd z = w * x + b;
        z.array() -= z.maxCoeff();
        Eigen::VectorXd p = z.array().exp();
        p /= p.sum();
        p(s.label) -= 1.0;
        gw += p * x.transpose();
        gb += p;
      }
    }
    w -= 0.1 * gw / static_cast<double>(total);
    b -= 0.1 * gb / static_cast<double>(total);
  }
  int correct = 0;
  for (const auto& s : subjects) {
    Eigen::VectorXd score = Eigen::VectorXd::Zero(classes);
    for (const auto& smp : s.samples) {
      const Eigen::VectorXd z = w * smp.features.reshaped<Eigen::RowMajor>() + b;
      Eigen::Index best = 0;
      z.maxCoeff(&best);
      score(best) += 1.0;
    }
    Eigen::Index best = 0;
    score.maxCoeff(&best);
    correct += best == s.label;
  }
  return static_cast<double>(correct) / static_cast<double>(subjects.size());
}

}  // namespace

TEST_CASE("fit history, ledger and loss bookkeeping") {
  const auto data = small_data(1, {3, 3, 3}, 0.2);
  TrainConfig cfg = small_train(3);
  cfg.penalty.minority_classes = {1};
  const FitResult fit_result = fit(data.subjects, cfg);
  REQUIRE(fit_result.history.size() == 20);
  int conf_rows = 0;
  for (const auto& e : fit_result.history) {
    CHECK(e.ledger.size() == 9);
    double sum = 0.0;
    for (const auto& r : e.ledger) {
      sum += r.w_all * (r.class_loss + r.domain_loss);
      CHECK(r.w_conf * r.w_pen == 0);
      if (r.w_conf == 0 && r.w_pen == 0) CHECK(r.w_all == 1.0);
      if (e.epoch < 10) CHECK(r.w_conf == 0);
      if (r.w_pen == 1) CHECK(cfg.penalty.minority_classes.contains(r.true_class));
      conf_rows += r.w_conf;
    }
    CHECK(std::abs(e.loss_all - sum) < 1e-9);
    CHECK(e.mean_loss == doctest::Approx(e.loss_all / 9.0));
    CHECK(e.train_accuracy >= 0.0);
    CHECK(e.train_accuracy <= 1.0);
  }
  CHECK(conf_rows > 0);
  CHECK(fit_result.params.all_finite());
  CHECK(fit_result.domains.size() == 9);
}

TEST_CASE("closed gates train with unit weights") {
  const auto data = small_data(2, {3, 3, 3}, 0.2);
  TrainConfig cfg = small_train(3);
  cfg.enable_confidence = false;
  cfg.enable_penalty = false;
  for (const auto& e : fit(data.subjects, cfg).history) {
    for (const auto& r : e.ledger) {
      CHECK(r.w_all == 1.0);
      CHECK(r.w_conf == 0);
      CHECK(r.w_pen == 0);
    }
  }
}

TEST_CASE("empty minority set equals the penalty-off run") {
  const auto data = small_data(3, {4, 2, 2});
  TrainConfig with = small_train(3);
  with.penalty.minority_classes.clear();
  TrainConfig without = with;
  without.enable_penalty = false;
  CHECK(fit(data.subjects, with).params == fit(data.subjects, without).params);
}

TEST_CASE("fit is deterministic and ignores input order") {
  const auto data = small_data(4);
  const TrainConfig cfg = small_train(3, 10);
  const FitResult a = fit(data.subjects, cfg);
  const FitResult b = fit(data.subjects, cfg);
  CHECK(a.params == b.params);
  auto shuffled = data.subjects;
  std::reverse(shuffled.begin(), shuffled.end());
  CHECK(fit(shuffled, cfg).params == a.params);
  TrainConfig other = cfg;
  other.seed = 99;
  CHECK_FALSE(fit(data.subjects, other).params == a.params);
}

TEST_CASE("weighted gradients scale exactly") {
  const auto data = small_data(5);
  ModelConfig model;
  model.channels = 4;
  model.classes = 3;
  model.hidden = 4;
  const ModelParams params = init_params(model);
  const auto unit = subject_losses(params, model, data.subjects[0], 1, 1.0);
  for (double w : {0.0, 0.3, 0.92}) {
    const auto scaled = subject_losses(params, model, data.subjects[0], 1, w);
    const auto a = scaled.grads.tensors();
    const auto b = unit.grads.tensors();
    for (int t = 0; t < ModelParams::kTensorCount; ++t) {
      const auto i = static_cast<std::size_t>(t);
      CHECK((*a[i] - w * *b[i]).cwiseAbs().maxCoeff() <= 1e-12);
    }
    CHECK(std::abs(scaled.loss.total - w * unit.loss.total) <= 1e-12);
  }
}

TEST_CASE("zero update rate freezes NeL2 at its first value") {
  const auto data = small_data(6);
  TrainConfig cfg = small_train(3, 12);
  cfg.confidence.u_rate = 0.0;
  const FitResult r = fit(data.subjects, cfg);
  std::map<std::string, double> first;
  for (const auto& row : r.history.front().ledger) first[row.subject_id] = row.nel2;
  for (const auto& e : r.history) {
    for (const auto& row : e.ledger) CHECK(row.nel2 == first.at(row.subject_id));
  }
}

TEST_CASE("clean separable data is fitted") {
  SynthConfig scfg;
  scfg.channels = 4;
  scfg.epochs_per_subject = 10;
  scfg.counts_per_class = {4, 4, 4, 4, 4};
  scfg.seed = 11;
  const auto data = generate(scfg);
  CHECK(softmax_baseline_accuracy(data.subjects, 5) >= 0.95);

  TrainConfig cfg = small_train(5, 60);
  const FitResult r = fit(data.subjects, cfg);
  CHECK(r.history.back().train_accuracy >= 0.95);
}

TEST_CASE("regression head") {
  auto data = small_data(7, {3, 3, 3});
  const int scores[] = {2, 12, 22};
  for (auto& s : data.subjects) s.score = scores[s.label];
  TrainConfig cfg = small_train(3, 30);
  cfg.model.head_mode = HeadMode::Regression;
  const FitResult r = fit(data.subjects, cfg);
  for (const auto& e : r.history) {
    for (const auto& row : e.ledger) {
      CHECK(row.w_all == 1.0);
      CHECK(row.w_conf == 0);
      CHECK(row.w_pen == 0);
    }
  }
  CHECK(r.history.back().loss_all < r.history.front().loss_all);
  data.subjects[0].score.reset();
  CHECK_THROWS_AS(fit(data.subjects, cfg), InputError);
}

TEST_CASE("fit preconditions") {
  const auto data = small_data(8);
  TrainConfig cfg = small_train(3);
  cfg.total_epochs = 0;
  CHECK_THROWS_AS(fit(data.subjects, cfg), ConfigError);
  cfg = small_train(3);
  std::vector<SubjectDataset> one_class(data.subjects.begin(), data.subjects.begin() + 3);
  CHECK_THROWS_AS(fit(one_class, cfg), ConfigError);
  auto dup = data.subjects;
  dup[1].subject_id = dup[0].subject_id;
  for (auto& s : dup[1].samples) s.subject_id = dup[0].subject_id;
  CHECK_THROWS_AS(fit(dup, cfg), InputError);
}

TEST_CASE("leave-one-subject-out protocol") {
  const auto data = small_data(9, {2, 2, 2});
  const TrainConfig cfg = small_train(3, 8);

  std::map<std::string, std::set<std::string>> seen;
  std::size_t leaks = 0;
  LosoOptions opts;
  opts.audit = [&](const AuditEvent& ev) {
    if (ev.subject_id == ev.held_out) ++leaks;
    seen[std::string(ev.held_out)].insert(std::string(ev.subject_id));
  };
  const LosoResult r = loso(data.subjects, cfg, opts);
  REQUIRE(r.folds.size() == 6);
  CHECK(leaks == 0);
  for (const auto& f : r.folds) {
    CHECK(seen.at(f.held_out_subject).size() == 5);
    CHECK_FALSE(seen.at(f.held_out_subject).contains(f.held_out_subject));
    CHECK(std::abs(f.mean_probs.sum() - 1.0) < 1e-9);
  }
  CHECK(std::is_sorted(r.folds.begin(), r.folds.end(),
                       [](const auto& a, const auto& b) { return a.held_out_subject < b.held_out_subject; }));
  CHECK(r.metrics.confusion.total() == 6);
  for (const auto& fit_result : r.fits) CHECK(fit_result.domains.size() == 5);

  auto shuffled = data.subjects;
  std::mt19937_64 rng(1);
  std::shuffle(shuffled.begin(), shuffled.end(), rng);
  const LosoResult again = loso(shuffled, cfg);
  for (std::size_t i = 0; i < r.folds.size(); ++i) {
    CHECK(again.folds[i].held_out_subject == r.folds[i].held_out_subject);
    CHECK(again.folds[i].predicted_class == r.folds[i].predicted_class);
    CHECK(again.folds[i].mean_probs == r.folds[i].mean_probs);
  }

  LosoOptions parallel;
  parallel.folds_parallel = 3;
  const LosoResult par = loso(data.subjects, cfg, parallel);
  for (std::size_t i = 0; i < r.folds.size(); ++i) {
    CHECK(par.folds[i].mean_probs == r.folds[i].mean_probs);
    CHECK(par.fits[i].params == r.fits[i].params);
  }

  std::vector<SubjectDataset> two(data.subjects.begin(), data.subjects.begin() + 2);
  CHECK_THROWS_AS(loso(two, cfg), ConfigError);
}
