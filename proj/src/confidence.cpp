#include "depgcn/confidence.hpp"

#include "depgcn/errors.hpp"

#include <algorithm>
#include <cmath>

namespace depgcn {

void ConfidenceConfig::validate() const {
  if (!(u_rate >= 0.0 && u_rate <= 1.0)) throw ConfigError("u_rate must lie in [0, 1]");
  if (!(conf_start_fraction >= 0.0 && conf_start_fraction <= 1.0)) {
    throw ConfigError("conf_start_fraction must lie in [0, 1]");
  }
  if (!(max_stat > 0.0 && max_theo > 0.0 && max_stat <= max_theo)) {
    throw ConfigError("require 0 < max_stat <= max_theo");
  }
}

double sample_el2(const Eigen::VectorXd& pred, int label) {
  if (label < 0 || label >= pred.size()) throw InputError("label out of range for prediction vector");
  if (!pred.allFinite() || pred.minCoeff() < -1e-12 || std::abs(pred.sum() - 1.0) > 1e-6) {
    throw InputError("prediction is not a probability distribution");
  }
  Eigen::VectorXd diff = pred;
  diff(label) -= 1.0;
  return diff.norm();
}

double subject_el2(std::span<const double> per_sample_el2) {
  if (per_sample_el2.empty()) throw InputError("subject_el2: no samples");
  double sum = 0.0;
  for (double v : per_sample_el2) sum += v;
  return sum / static_cast<double>(per_sample_el2.size());
}

double update_nel2(double lel2, double el2, double u_rate) { return lel2 - u_rate * (lel2 - el2); }

double confidence_value(double nel2, const ConfidenceConfig& cfg) {
  const double denom = uses_theoretical_max(nel2, cfg) ? cfg.max_theo : cfg.max_stat;
  return std::clamp(1.0 - nel2 / denom, 0.0, 1.0);
}

bool confidence_active(int epoch, int total_epochs, const ConfidenceConfig& cfg) {
  const auto start = static_cast<int>(std::floor(cfg.conf_start_fraction * static_cast<double>(total_epochs)));
  return epoch >= start;
}

const SubjectConfidence& ConfidenceState::at(const std::string& subject_id) const {
  auto it = subjects.find(subject_id);
  if (it == subjects.end()) throw InputError("no confidence history for subject '" + subject_id + "'");
  return it->second;
}

void epoch_update(ConfidenceState& state, const std::string& subject_id, double el2, const ConfidenceConfig& cfg) {
  if (!(el2 >= 0.0)) throw InputError("eL2 must be >= 0");
  auto& s = state.subjects[subject_id];
  if (!s.initialized) {
    s.lel2 = el2;
    s.initialized = true;
  }
  s.nel2 = update_nel2(s.lel2, el2, cfg.u_rate);
  if (uses_theoretical_max(s.nel2, cfg)) ++state.fallback_count;
  s.val_conf = confidence_value(s.nel2, cfg);
  s.lel2 = s.nel2;
}

}  // namespace depgcn
