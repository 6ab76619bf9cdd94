#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <span>
#include <string>

namespace depgcn {

struct ConfidenceConfig {
  double u_rate = 0.5;
  double conf_start_fraction = 0.5;
  double max_stat = 0.8 * 1.4142135623730951;  // empirical ceiling of NeL2
  double max_theo = 1.4142135623730951;        // ||onehot(a) - onehot(b)||_2

  void validate() const;
};

/// ||pred - onehot(label)||_2. `pred` must be a probability vector.
double sample_el2(const Eigen::VectorXd& pred, int label);

/// Mean of the per-epoch eL2 values of one subject.
double subject_el2(std::span<const double> per_sample_el2);

/// LeL2 - u_rate * (LeL2 - eL2).
double update_nel2(double lel2, double el2, double u_rate);

/// 1 - NeL2 / max_stat, or 1 - NeL2 / max_theo once NeL2 exceeds max_stat,
/// clamped to [0, 1].
double confidence_value(double nel2, const ConfidenceConfig& cfg);

/// True iff fallback to the theoretical maximum applies.
inline bool uses_theoretical_max(double nel2, const ConfidenceConfig& cfg) { return nel2 > cfg.max_stat; }

/// epoch >= floor(conf_start_fraction * total_epochs).
bool confidence_active(int epoch, int total_epochs, const ConfidenceConfig& cfg);

struct SubjectConfidence {
  double lel2 = 0.0;
  double nel2 = 0.0;
  double val_conf = 1.0;
  bool initialized = false;
};

/// Per-subject smoothed error history. Owned by the training loop.
struct ConfidenceState {
  std::map<std::string, SubjectConfidence> subjects;
  std::uint64_t fallback_count = 0;

  const SubjectConfidence& at(const std::string& subject_id) const;
};

/// One smoothing step for `subject_id`. The first update seeds LeL2 with
/// `el2`; afterwards LeL2 carries the previous NeL2.
void epoch_update(ConfidenceState& state, const std::string& subject_id, double el2, const ConfidenceConfig& cfg);

}  // namespace depgcn
