#pragma once

#include "depgcn/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

namespace depgcn::testing {

inline Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> n(0.0, sd);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = n(rng);
  }
  return m;
}

inline ModelParams random_params(const ModelConfig& cfg, std::mt19937_64& rng, double sd = 0.5) {
  ModelParams p = ModelParams::zeros(cfg);
  for (auto* t : p.tensors()) *t = random_matrix(t->rows(), t->cols(), rng, sd);
  return p;
}

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Central differences on batch_loss. The reversal point only changes the
// backward pass, so for the trunk tensors the oracle is
// d(class)/dp - lambda * d(domain)/dp; heads see class + domain directly.
inline GradCheck finite_difference_check(const ModelParams& params, const ModelConfig& cfg,
                                         std::span<const BatchItem> batch, double weight, double step = 1e-5,
                                         double floor = 1e-6) {
  const Gradients analytic = loss_and_gradients(params, cfg, batch, weight).grads;
  GradCheck out;
  ModelParams probe = params;
  auto probe_tensors = probe.tensors();
  const auto grad_tensors = analytic.tensors();
  for (int t = 0; t < ModelParams::kTensorCount; ++t) {
    const bool trunk = t <= 2;
    Eigen::MatrixXd& m = *probe_tensors[static_cast<std::size_t>(t)];
    const Eigen::MatrixXd& g = *grad_tensors[static_cast<std::size_t>(t)];
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double saved = m(i);
      m(i) = saved + step;
      const LossBreakdown up = batch_loss(probe, cfg, batch, weight);
      m(i) = saved - step;
      const LossBreakdown down = batch_loss(probe, cfg, batch, weight);
      m(i) = saved;
      const double d_class = weight * (up.class_loss - down.class_loss) / (2.0 * step);
      const double d_domain = weight * (up.domain_loss - down.domain_loss) / (2.0 * step);
      const double numeric = trunk ? d_class - cfg.grl_lambda * d_domain : d_class + d_domain;
      const double denom = std::max({std::abs(numeric), std::abs(g(i)), floor});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(numeric - g(i)) / denom);
      ++out.checked;
    }
  }
  return out;
}

}  // namespace depgcn::testing
