#pragma once

// Compact graph-convolutional classifier: a sigmoid-gated 2-D input
// attention, one normalized graph convolution over channels, and linear
// class / domain / regression heads. The domain head sits behind a
// gradient-reversal point.

#include "depgcn/features.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace depgcn {

enum class HeadMode : std::uint8_t { Classification = 0, Regression = 1 };

struct ModelConfig {
  int channels = 0;
  int bands = 5;
  int hidden = 8;
  int classes = 5;
  int domains = 2;
  double grl_lambda = 0.1;
  HeadMode head_mode = HeadMode::Classification;
  std::uint64_t seed = 0;

  /// Throws ConfigError on non-positive sizes or a negative reversal coefficient.
  void validate() const;
  int feature_width() const { return channels * hidden; }
};

/// All trainable tensors. Biases are stored as column matrices so that every
/// tensor can be visited uniformly.
struct ModelParams {
  Eigen::MatrixXd attention;          // C x B, gate logits
  Eigen::MatrixXd adjacency_raw;      // C x C
  Eigen::MatrixXd conv_weight;        // B x H
  Eigen::MatrixXd class_weight;       // (C*H) x N
  Eigen::MatrixXd class_bias;         // N x 1
  Eigen::MatrixXd domain_weight;      // (C*H) x DN
  Eigen::MatrixXd domain_bias;        // DN x 1
  Eigen::MatrixXd regression_weight;  // (C*H) x 1
  Eigen::MatrixXd regression_bias;    // 1 x 1

  static constexpr int kTensorCount = 9;

  static constexpr std::array<const char*, kTensorCount> kNames = {
      "attention",   "adjacency_raw", "conv_weight",       "class_weight",   "class_bias",
      "domain_weight", "domain_bias", "regression_weight", "regression_bias"};

  std::array<Eigen::MatrixXd*, kTensorCount> tensors() {
    return {&attention,     &adjacency_raw, &conv_weight,       &class_weight,   &class_bias,
            &domain_weight, &domain_bias,   &regression_weight, &regression_bias};
  }
  std::array<const Eigen::MatrixXd*, kTensorCount> tensors() const {
    return {&attention,     &adjacency_raw, &conv_weight,       &class_weight,   &class_bias,
            &domain_weight, &domain_bias,   &regression_weight, &regression_bias};
  }

  /// Same shapes as `cfg` dictates, all zero.
  static ModelParams zeros(const ModelConfig& cfg);

  bool all_finite() const;
  bool operator==(const ModelParams& other) const;
};

/// Gradients share the parameter layout.
using Gradients = ModelParams;

struct ForwardCache {
  Eigen::MatrixXd gate;        // sigmoid(attention)
  Eigen::MatrixXd gated;       // X .* gate
  Eigen::MatrixXd propagated;  // A_hat * gated
  Eigen::MatrixXd pre_relu;    // propagated * W1
  Eigen::VectorXd flat;        // relu(pre_relu), row-major flattened
};

struct ForwardOutput {
  Eigen::VectorXd class_probs;
  Eigen::VectorXd domain_probs;
  std::optional<double> regression_score;
  ForwardCache cache;
};

ModelParams init_params(const ModelConfig& cfg);

Eigen::MatrixXd apply_attention(const Eigen::MatrixXd& x, const Eigen::MatrixXd& attention);

/// softplus(W + W^T), then D^-1/2 (A + I) D^-1/2.
Eigen::MatrixXd normalize_adjacency(const Eigen::MatrixXd& adjacency_raw);

/// Log-sum-exp stabilised softmax.
Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

ForwardOutput forward(const ModelParams& params, const ModelConfig& cfg, const Eigen::MatrixXd& x);

/// Same as forward() with a precomputed normalize_adjacency(params.adjacency_raw).
ForwardOutput forward(const ModelParams& params, const ModelConfig& cfg, const Eigen::MatrixXd& adjacency,
                      const Eigen::MatrixXd& x);

struct BatchItem {
  std::reference_wrapper<const Eigen::MatrixXd> features;
  int class_label = 0;
  int domain_label = 0;
  double regression_target = 0.0;
};

struct LossBreakdown {
  double total = 0.0;        // weight * (class_loss + domain_loss)
  double class_loss = 0.0;   // mean cross-entropy, or mean squared error in regression mode
  double domain_loss = 0.0;  // mean cross-entropy of the domain head
};

struct LossAndGradients {
  LossBreakdown loss;
  Gradients grads;
};

/// Weighted batch loss and its exact gradient. The weight is a constant, and
/// the domain head's contribution to shared parameters is scaled by -grl_lambda.
LossAndGradients loss_and_gradients(const ModelParams& params, const ModelConfig& cfg,
                                    std::span<const BatchItem> batch, double weight);

/// Loss only; used by finite-difference checks. The reversal has no effect on
/// the value, so this is the plain weighted objective.
LossBreakdown batch_loss(const ModelParams& params, const ModelConfig& cfg, std::span<const BatchItem> batch,
                         double weight);

struct Momentum {
  Gradients velocity;
  double mu = 0.9;

  static Momentum zeros_like(const ModelConfig& cfg, double mu = 0.9);
};

/// v <- mu*v + g; p <- p - lr*v.
void sgd_step(ModelParams& params, const Gradients& grads, double lr, Momentum& state);

/// k-means (k = domains) over per-subject mean feature vectors. k-means++
/// seeding from `seed`, at most 100 Lloyd iterations or until no centroid
/// moves more than 1e-8. `on_input` sees every subject id handed in.
std::map<std::string, int> ssp_partition(std::span<const SubjectDataset* const> subjects, int domains,
                                         std::uint64_t seed,
                                         const std::function<void(const std::string&)>& on_input = {});

std::map<std::string, int> ssp_partition(const std::vector<SubjectDataset>& subjects, int domains,
                                         std::uint64_t seed);

struct SubjectPrediction {
  int predicted_class = 0;
  Eigen::VectorXd mean_probs;
  std::optional<double> mean_regression;
};

/// Mean of per-epoch class probabilities; argmax with ties to the lowest index.
SubjectPrediction predict_subject(const ModelParams& params, const ModelConfig& cfg, const SubjectDataset& subject);

/// Tie-breaking argmax shared by prediction and metrics code.
int argmax_lowest(const Eigen::VectorXd& v);

// Checkpoint (.dgcn): "DGCN" u32 version=1, u32 channels bands hidden classes
// domains, f64 grl_lambda, u8 head_mode, u64 seed, u32 tensor_count, then per
// tensor u32 rank=2, u32 rows, u32 cols, f64 payload row-major.
void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const std::filesystem::path& path);
std::pair<ModelParams, ModelConfig> load_checkpoint(const std::filesystem::path& path);

}  // namespace depgcn
