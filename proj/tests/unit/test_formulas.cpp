#include "depgcn/confidence.hpp"
#include "depgcn/errors.hpp"
#include "depgcn/metrics.hpp"
#include "depgcn/penalty.hpp"
#include "depgcn/trainer.hpp"

#include "doctest.h"
#include "formula_examples.hpp"
#include "metrics_oracle.hpp"

#include <algorithm>
#include <numeric>
#include <random>

using namespace depgcn;

TEST_CASE("worked formula examples") {
  for (const auto& ex : depgcn::testing::formula_examples()) {
    INFO(ex.name << ": got " << ex.got << ", expected " << ex.expected);
    CHECK(ex.ok());
  }
}

TEST_CASE("sample_el2 rejects bad input") {
  CHECK_THROWS_AS(sample_el2(depgcn::testing::probs({0.5, 0.5}), 2), InputError);
  CHECK_THROWS_AS(sample_el2(depgcn::testing::probs({0.7, 0.7}), 0), InputError);
  CHECK_THROWS_AS(subject_el2(std::vector<double>{}), InputError);
}

TEST_CASE("val_conf is monotone on each branch and bounded") {
  // The switch to the theoretical maximum raises the value just past
  // max_stat (0 -> 1 - max_stat/max_theo), so monotonicity holds per branch.
  const ConfidenceConfig cfg;
  double previous = 2.0;
  bool fallback = false;
  for (int i = 0; i <= 400; ++i) {
    const double nel2 = i * 0.005;
    const double v = confidence_value(nel2, cfg);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    if (uses_theoretical_max(nel2, cfg) != fallback) {
      fallback = true;
      CHECK(v == doctest::Approx(1.0 - nel2 / cfg.max_theo));
    } else {
      CHECK(v <= previous);
    }
    previous = v;
  }
}

TEST_CASE("NeL2 stays inside the hull of its inputs") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> el2(0.0, 1.4);
  std::uniform_real_distribution<double> rate(0.01, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    ConfidenceConfig cfg;
    cfg.u_rate = rate(rng);
    ConfidenceState state;
    double lo = 10.0, hi = -10.0;
    for (int e = 0; e < 30; ++e) {
      const double v = el2(rng);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
      epoch_update(state, "s", v, cfg);
      CHECK(state.at("s").nel2 >= lo - 1e-15);
      CHECK(state.at("s").nel2 <= hi + 1e-15);
    }
  }
}

TEST_CASE("fallback count tracks the theoretical-maximum branch") {
  ConfidenceConfig cfg;
  cfg.u_rate = 1.0;
  ConfidenceState state;
  epoch_update(state, "s", 1.2, cfg);
  epoch_update(state, "s", 0.2, cfg);
  epoch_update(state, "s", 1.3, cfg);
  CHECK(state.fallback_count == 2);
  CHECK_THROWS_AS(state.at("other"), InputError);
}

TEST_CASE("confidence config validation") {
  ConfidenceConfig cfg;
  cfg.u_rate = 1.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = {};
  cfg.max_stat = 2.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("val_pen is strictly increasing below the clamp") {
  const PenaltyConfig cfg;
  double previous = -1.0;
  for (int i = 0; i < 100; ++i) {
    const double nel2 = cfg.max_norm * i / 100.0;
    const double v = penalty_value(nel2, cfg);
    CHECK(v > previous);
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
    previous = v;
  }
  CHECK(penalty_value(5.0, cfg) == 1.0);
}

TEST_CASE("empty minority set never triggers") {
  const PenaltyConfig cfg;
  for (int t = 0; t < 5; ++t) {
    for (int p = 0; p < 5; ++p) CHECK_FALSE(penalty_triggered(t, p, cfg));
  }
  CHECK(default_minority_classes(5) == std::set<int>{1, 2});
  CHECK(default_minority_classes(4) == std::set<int>{1, 2, 3});
  CHECK(default_minority_classes(3).empty());

  PenaltyConfig bad;
  bad.minority_classes = {5};
  CHECK_THROWS_AS(bad.validate(5), ConfigError);
}

TEST_CASE("arbitration invariants over a grid") {
  TrainConfig cfg;
  cfg.penalty.minority_classes = {1, 2};
  for (bool conf_on : {false, true}) {
    for (bool pen_on : {false, true}) {
      cfg.enable_confidence = conf_on;
      cfg.enable_penalty = pen_on;
      for (int epoch : {0, 49, 50, 99}) {
        for (int t = 0; t < 5; ++t) {
          for (int p = 0; p < 5; ++p) {
            for (double nel2 : {0.0, 0.3, 1.0, 1.3}) {
              SubjectConfidence s;
              s.nel2 = nel2;
              s.val_conf = confidence_value(nel2, cfg.confidence);
              s.initialized = true;
              const WeightDecision d = arbitrate_weights(s, t, p, epoch, cfg);
              CHECK(d.w_conf * d.w_pen == 0);
              if (d.w_conf == 0 && d.w_pen == 0) CHECK(d.w_all == 1.0);
              if (!conf_on) CHECK(d.w_conf == 0);
              if (!pen_on) CHECK(d.w_pen == 0);
              if (epoch < 50) CHECK(d.w_conf == 0);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("confusion matrix basics") {
  const ConfusionMatrix empty = confusion({}, 3);
  CHECK(empty.total() == 0);
  const std::vector<ClassPair> pairs = {{0, 0}, {1, 0}};
  const ConfusionMatrix cm = confusion(pairs, 2);
  CHECK(cm(0, 0) == 1);
  CHECK(cm(0, 1) == 0);
  CHECK(cm(1, 0) == 1);
  CHECK(cm(1, 1) == 0);
  std::vector<ClassPair> reversed(pairs.rbegin(), pairs.rend());
  CHECK(confusion(reversed, 2) == cm);
  CHECK_THROWS_AS(confusion(std::vector<ClassPair>{{2, 0}}, 2), InputError);
  CHECK_THROWS_AS(micro_prf(empty), InputError);
}


TEST_CASE("metrics agree with a brute-force counter") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const int classes = std::uniform_int_distribution<int>(1, 6)(rng);
    const int n = std::uniform_int_distribution<int>(1, 200)(rng);
    std::uniform_int_distribution<int> cls(0, classes - 1);
    std::vector<ClassPair> pairs;
    for (int i = 0; i < n; ++i) pairs.emplace_back(cls(rng), cls(rng));
    const MetricsReport r = evaluate(pairs, classes);
    const auto b = depgcn::testing::brute_force(pairs, classes);
    for (int c = 0; c < classes; ++c) {
      CHECK(r.per_class[static_cast<std::size_t>(c)].precision == b.precision[static_cast<std::size_t>(c)]);
      CHECK(r.per_class[static_cast<std::size_t>(c)].recall == b.recall[static_cast<std::size_t>(c)]);
    }
    CHECK(r.macro.precision == b.macro_p);
    CHECK(r.macro.recall == b.macro_r);
    CHECK(r.macro.f1 == b.macro_f1);
    CHECK(r.micro_precision == b.micro);
    CHECK(r.accuracy == b.accuracy);
    CHECK(r.micro_precision == r.accuracy);
  }
}

TEST_CASE("relabelling classes permutes per-class scores only") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int classes = 5;
    std::uniform_int_distribution<int> cls(0, classes - 1);
    std::vector<ClassPair> pairs;
    for (int i = 0; i < 60; ++i) pairs.emplace_back(cls(rng), cls(rng));
    std::vector<int> perm(classes);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<ClassPair> relabelled;
    for (const auto& [t, p] : pairs) relabelled.emplace_back(perm[static_cast<std::size_t>(t)], perm[static_cast<std::size_t>(p)]);
    const MetricsReport a = evaluate(pairs, classes);
    const MetricsReport b = evaluate(relabelled, classes);
    for (int c = 0; c < classes; ++c) {
      const auto& pa = a.per_class[static_cast<std::size_t>(c)];
      const auto& pb = b.per_class[static_cast<std::size_t>(perm[static_cast<std::size_t>(c)])];
      CHECK(pa.precision == pb.precision);
      CHECK(pa.recall == pb.recall);
    }
    CHECK(std::abs(a.macro.precision - b.macro.precision) < 1e-12);
    CHECK(std::abs(a.macro.recall - b.macro.recall) < 1e-12);
    CHECK(std::abs(a.macro.f1 - b.macro.f1) < 1e-12);
    CHECK(a.micro_precision == b.micro_precision);
  }
}

TEST_CASE("RMSE never falls below MAE") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::pair<double, double>> pairs;
    for (int i = 0; i < 10; ++i) pairs.emplace_back(n(rng), n(rng));
    const auto r = mae_rmse(pairs);
    CHECK(r.rmse >= r.mae - 1e-12);
  }
}
