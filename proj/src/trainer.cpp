#include "depgcn/trainer.hpp"

#include "depgcn/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <random>
#include <set>
#include <thread>

namespace depgcn {

namespace {

std::vector<const SubjectDataset*> sorted_refs(std::span<const SubjectDataset* const> subjects) {
  std::vector<const SubjectDataset*> refs(subjects.begin(), subjects.end());
  std::ranges::sort(refs, {}, [](const SubjectDataset* s) { return s->subject_id; });
  for (std::size_t i = 1; i < refs.size(); ++i) {
    if (refs[i]->subject_id == refs[i - 1]->subject_id) {
      throw InputError("duplicate subject id '" + refs[i]->subject_id + "'");
    }
  }
  return refs;
}

double regression_target(const SubjectDataset& subject, Scale scale) {
  if (!subject.score) throw InputError("subject '" + subject.subject_id + "' has no score for regression");
  return static_cast<double>(*subject.score) / static_cast<double>(max_score(scale));
}

}  // namespace

void TrainConfig::validate() const {
  if (total_epochs < 1) throw ConfigError("total_epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (model.hidden < 1 || model.classes < 1 || model.domains < 1) {
    throw ConfigError("hidden, classes and domains must be >= 1");
  }
  if (!(model.grl_lambda >= 0.0)) throw ConfigError("grl_lambda must be >= 0");
  confidence.validate();
  penalty.validate(model.classes);
}

WeightDecision arbitrate_weights(const SubjectConfidence& subject_state, int true_class, int predicted_class,
                                 int epoch, const TrainConfig& cfg) {
  WeightDecision d;
  d.val_conf = subject_state.val_conf;
  d.val_pen = penalty_value(subject_state.nel2, cfg.penalty);
  if (cfg.enable_penalty && penalty_triggered(true_class, predicted_class, cfg.penalty)) {
    d.w_pen = 1;
    d.w_all = d.val_pen;
  } else if (cfg.enable_confidence && confidence_active(epoch, cfg.total_epochs, cfg.confidence)) {
    d.w_conf = 1;
    d.w_all = d.val_conf;
  } else {
    d.w_all = 1.0;
  }
  return d;
}

LossAndGradients subject_losses(const ModelParams& params, const ModelConfig& model, const SubjectDataset& subject,
                                int domain_label, double w_all, Scale score_scale) {
  const double target = model.head_mode == HeadMode::Regression ? regression_target(subject, score_scale) : 0.0;
  std::vector<BatchItem> batch;
  batch.reserve(subject.samples.size());
  for (const auto& s : subject.samples) batch.push_back({std::cref(s.features), subject.label, domain_label, target});
  return loss_and_gradients(params, model, batch, w_all);
}

EpochStats train_epoch(TrainingState& state, std::span<const SubjectDataset* const> subjects,
                       const std::map<std::string, int>& domains, int epoch, const TrainConfig& cfg,
                       const AuditHook& audit, std::string_view held_out) {
  if (epoch < 0 || epoch >= cfg.total_epochs) throw ConfigError("epoch index outside [0, total_epochs)");
  const ModelConfig& model = cfg.model;

  std::vector<std::size_t> order(subjects.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(seq);
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats stats;
  stats.epoch = epoch;
  const auto fallbacks_before = state.confidence.fallback_count;
  int correct = 0;
  std::vector<double> el2;

  for (std::size_t idx : order) {
    const SubjectDataset& subject = *subjects[idx];
    const auto dom = domains.find(subject.subject_id);
    if (dom == domains.end()) throw InputError("subject '" + subject.subject_id + "' has no domain label");

    LedgerRow row;
    row.subject_id = subject.subject_id;
    row.epoch = epoch;
    row.true_class = subject.label;

    if (!cfg.regression()) {
      // Per-sample eL2 and the subject prediction come from the same
      // pre-update forward pass.
      const Eigen::MatrixXd adjacency = normalize_adjacency(state.params.adjacency_raw);
      Eigen::VectorXd mean_probs = Eigen::VectorXd::Zero(model.classes);
      el2.clear();
      for (const auto& s : subject.samples) {
        const auto probs = forward(state.params, model, adjacency, s.features).class_probs;
        el2.push_back(sample_el2(probs, subject.label));
        mean_probs += probs;
      }
      mean_probs /= static_cast<double>(subject.samples.size());
      row.predicted_class = argmax_lowest(mean_probs);

      epoch_update(state.confidence, subject.subject_id, subject_el2(el2), cfg.confidence);
      const auto& conf = state.confidence.at(subject.subject_id);
      const WeightDecision d = arbitrate_weights(conf, subject.label, row.predicted_class, epoch, cfg);
      row.w_conf = d.w_conf;
      row.w_pen = d.w_pen;
      row.val_conf = d.val_conf;
      row.val_pen = d.val_pen;
      row.w_all = d.w_all;
      row.nel2 = conf.nel2;
      if (row.predicted_class == subject.label) ++correct;
    } else {
      const double predicted = predict_subject(state.params, model, subject).mean_regression.value_or(0.0);
      row.predicted_class = level_from_score(
          static_cast<int>(std::lround(std::clamp(predicted, 0.0, 1.0) * max_score(cfg.score_scale))),
          cfg.score_scale);
      if (row.predicted_class == subject.label) ++correct;
    }

    if (audit) audit({AuditSite::Gradient, subject.subject_id, held_out});
    const auto lg = subject_losses(state.params, model, subject, dom->second, row.w_all, cfg.score_scale);
    sgd_step(state.params, lg.grads, cfg.learning_rate, state.momentum);

    row.class_loss = lg.loss.class_loss;
    row.domain_loss = lg.loss.domain_loss;
    stats.loss_all += lg.loss.total;
    stats.ledger.push_back(std::move(row));
  }
  stats.mean_loss = subjects.empty() ? 0.0 : stats.loss_all / static_cast<double>(subjects.size());
  stats.train_accuracy = subjects.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(subjects.size());
  stats.fallback_count = state.confidence.fallback_count - fallbacks_before;
  return stats;
}

FitResult fit(std::span<const SubjectDataset* const> subjects, const TrainConfig& cfg_in, const AuditHook& audit,
              std::string_view held_out) {
  cfg_in.validate();
  if (subjects.size() < 2) throw ConfigError("fit needs at least 2 training subjects");
  const auto refs = sorted_refs(subjects);
  for (const auto* s : refs) validate(*s);

  TrainConfig cfg = cfg_in;
  cfg.model.channels = static_cast<int>(refs.front()->channels());
  cfg.model.bands = static_cast<int>(refs.front()->bands());
  cfg.model.seed = cfg.seed;
  cfg.model.validate();
  for (const auto* s : refs) {
    if (s->channels() != cfg.model.channels || s->bands() != cfg.model.bands) {
      throw ShapeError("subject '" + s->subject_id + "' has a different feature shape");
    }
  }
  if (cfg.regression()) {
    // Confidence and penalty weights need class probabilities.
    cfg.enable_confidence = false;
    cfg.enable_penalty = false;
  } else {
    std::set<int> present;
    for (const auto* s : refs) {
      if (s->label < 0 || s->label >= cfg.model.classes) {
        throw InputError("subject '" + s->subject_id + "' label " + std::to_string(s->label) + " out of range");
      }
      present.insert(s->label);
    }
    if (present.size() < 2) throw ConfigError("fit needs at least 2 classes among training subjects");
  }

  FitResult result;
  result.model = cfg.model;
  result.domains = ssp_partition(refs, cfg.model.domains, cfg.seed, [&](const std::string& id) {
    if (audit) audit({AuditSite::Partition, id, held_out});
  });

  TrainingState state{init_params(cfg.model), Momentum::zeros_like(cfg.model, cfg.momentum), {}};
  result.history.reserve(static_cast<std::size_t>(cfg.total_epochs));
  for (int epoch = 0; epoch < cfg.total_epochs; ++epoch) {
    result.history.push_back(train_epoch(state, refs, result.domains, epoch, cfg, audit, held_out));
  }
  result.params = std::move(state.params);
  result.confidence = std::move(state.confidence);
  result.fallback_count = result.confidence.fallback_count;
  return result;
}

FitResult fit(const std::vector<SubjectDataset>& subjects, const TrainConfig& cfg, const AuditHook& audit) {
  std::vector<const SubjectDataset*> refs;
  refs.reserve(subjects.size());
  for (const auto& s : subjects) refs.push_back(&s);
  return fit(refs, cfg, audit);
}

LosoResult loso(const std::vector<SubjectDataset>& subjects, const TrainConfig& cfg, const LosoOptions& opts) {
  if (subjects.size() < 3) throw ConfigError("leave-one-subject-out needs at least 3 subjects");
  cfg.validate();
  std::vector<const SubjectDataset*> all;
  for (const auto& s : subjects) all.push_back(&s);
  const auto refs = sorted_refs(all);
  const std::size_t n = refs.size();

  LosoResult result;
  result.folds.resize(n);
  result.fits.resize(n);

  auto run_fold = [&](std::size_t i) {
    const SubjectDataset& held = *refs[i];
    std::vector<const SubjectDataset*> train;
    train.reserve(n - 1);
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) train.push_back(refs[j]);
    }
    FitResult f = fit(train, cfg, opts.audit, held.subject_id);
    const SubjectPrediction pred = predict_subject(f.params, f.model, held);

    FoldResult fold;
    fold.held_out_subject = held.subject_id;
    fold.true_class = held.label;
    fold.mean_probs = pred.mean_probs;
    fold.final_train_loss = f.history.back().mean_loss;
    if (cfg.regression()) {
      const int top = max_score(cfg.score_scale);
      fold.predicted_score = pred.mean_regression.value_or(0.0) * top;
      if (held.score) fold.true_score = static_cast<double>(*held.score);
      fold.predicted_class = level_from_score(
          static_cast<int>(std::lround(std::clamp(*fold.predicted_score, 0.0, static_cast<double>(top)))),
          cfg.score_scale);
    } else {
      fold.predicted_class = pred.predicted_class;
    }
    if (!opts.keep_history) f.history.clear();
    result.folds[i] = std::move(fold);
    result.fits[i] = std::move(f);
  };

  const auto workers = static_cast<std::size_t>(std::clamp(opts.folds_parallel, 1, static_cast<int>(n)));
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) run_fold(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < n; i = next++) {
          try {
            run_fold(i);
          } catch (...) {
            std::lock_guard lock(failure_mutex);
            if (!failure) failure = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
  }

  std::vector<ClassPair> pairs;
  pairs.reserve(n);
  int classes = cfg.model.classes;
  if (cfg.regression()) classes = class_count(cfg.score_scale);
  for (const auto& f : result.folds) pairs.emplace_back(f.true_class, f.predicted_class);
  result.metrics = evaluate(pairs, classes);
  if (cfg.regression()) {
    std::vector<std::pair<double, double>> scores;
    for (const auto& f : result.folds) {
      if (f.true_score && f.predicted_score) scores.emplace_back(*f.true_score, *f.predicted_score);
    }
    if (!scores.empty()) result.metrics.regression = mae_rmse(scores);
  }
  return result;
}

}  // namespace depgcn
