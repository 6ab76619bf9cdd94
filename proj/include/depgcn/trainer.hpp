#pragma once

#include "depgcn/confidence.hpp"
#include "depgcn/features.hpp"
#include "depgcn/gcn.hpp"
#include "depgcn/metrics.hpp"
#include "depgcn/penalty.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace depgcn {

struct TrainConfig {
  int total_epochs = 100;
  double learning_rate = 0.05;
  double momentum = 0.9;
  ConfidenceConfig confidence;
  PenaltyConfig penalty;
  /// channels and bands are taken from the data at fit time.
  ModelConfig model;
  bool enable_confidence = true;
  bool enable_penalty = true;
  std::uint64_t seed = 0;
  /// Regression targets are score / max_score(score_scale); predictions are
  /// mapped back to scores and levels through the same scale.
  Scale score_scale = Scale::PHQ9;

  void validate() const;
  bool regression() const { return model.head_mode == HeadMode::Regression; }
};

/// One row per subject per epoch.
struct LedgerRow {
  std::string subject_id;
  int epoch = 0;
  int w_conf = 0;
  int w_pen = 0;
  double val_conf = 1.0;
  double val_pen = 0.0;
  double w_all = 1.0;
  double nel2 = 0.0;
  int true_class = 0;
  int predicted_class = 0;
  double class_loss = 0.0;
  double domain_loss = 0.0;
};

struct WeightDecision {
  int w_conf = 0;
  int w_pen = 0;
  double val_conf = 1.0;
  double val_pen = 0.0;
  double w_all = 1.0;
};

/// Penalty first, then confidence, else 1.0.
WeightDecision arbitrate_weights(const SubjectConfidence& subject_state, int true_class, int predicted_class,
                                 int epoch, const TrainConfig& cfg);

enum class AuditSite { Gradient, Partition };

struct AuditEvent {
  AuditSite site;
  std::string_view subject_id;
  std::string_view held_out;  // empty outside leave-one-out runs
};

using AuditHook = std::function<void(const AuditEvent&)>;

struct EpochStats {
  int epoch = 0;
  double loss_all = 0.0;   // sum over subjects of w_all * (class + domain loss)
  double mean_loss = 0.0;  // loss_all / subjects
  double train_accuracy = 0.0;
  std::uint64_t fallback_count = 0;  // theoretical-maximum fallbacks this epoch
  std::vector<LedgerRow> ledger;
};

/// Weighted loss of one subject's samples; w_all is held constant.
LossAndGradients subject_losses(const ModelParams& params, const ModelConfig& model, const SubjectDataset& subject,
                                int domain_label, double w_all, Scale score_scale = Scale::PHQ9);

struct TrainingState {
  ModelParams params;
  Momentum momentum;
  ConfidenceState confidence;
};

/// One pass over `subjects` in a seed-and-epoch-determined order, one SGD
/// step per subject.
EpochStats train_epoch(TrainingState& state, std::span<const SubjectDataset* const> subjects,
                       const std::map<std::string, int>& domains, int epoch, const TrainConfig& cfg,
                       const AuditHook& audit = {}, std::string_view held_out = {});

struct FitResult {
  ModelParams params;
  ModelConfig model;
  std::map<std::string, int> domains;
  std::vector<EpochStats> history;
  ConfidenceState confidence;
  std::uint64_t fallback_count = 0;
};

/// Domain partition of the training subjects, then total_epochs epochs.
/// Subjects are processed in subject-id order so that results do not depend
/// on the order of the input list.
FitResult fit(std::span<const SubjectDataset* const> subjects, const TrainConfig& cfg, const AuditHook& audit = {},
              std::string_view held_out = {});
FitResult fit(const std::vector<SubjectDataset>& subjects, const TrainConfig& cfg, const AuditHook& audit = {});

struct FoldResult {
  std::string held_out_subject;
  int predicted_class = 0;
  int true_class = 0;
  Eigen::VectorXd mean_probs;
  double final_train_loss = 0.0;
  std::optional<double> predicted_score;
  std::optional<double> true_score;
};

struct LosoOptions {
  int folds_parallel = 1;
  AuditHook audit;
  bool keep_history = true;
};

struct LosoResult {
  std::vector<FoldResult> folds;          // sorted by held-out subject id
  std::vector<FitResult> fits;            // parallel to folds; history only if keep_history
  MetricsReport metrics;
};

/// Leave-one-subject-out: fresh model per fold, trained on every other subject.
LosoResult loso(const std::vector<SubjectDataset>& subjects, const TrainConfig& cfg, const LosoOptions& opts = {});

}  // namespace depgcn
