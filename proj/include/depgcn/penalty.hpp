#pragma once

#include <set>

namespace depgcn {

struct PenaltyConfig {
  std::set<int> minority_classes;
  double max_norm = 0.8 * 1.4142135623730951;

  void validate(int classes) const;
};

/// Misclassified subject of a minority class.
bool penalty_triggered(int true_class, int predicted_class, const PenaltyConfig& cfg);

/// min(NeL2 / max_norm, 1).
double penalty_value(double nel2, const PenaltyConfig& cfg);

/// Defaults: {Mild, Moderate} for the five-level PHQ-9 layout and
/// {Mild, Moderate, Major} for the four-level BDI layout.
std::set<int> default_minority_classes(int classes);

}  // namespace depgcn
