#include "depgcn/penalty.hpp"

#include "depgcn/errors.hpp"

#include <algorithm>

namespace depgcn {

void PenaltyConfig::validate(int classes) const {
  if (!(max_norm > 0.0)) throw ConfigError("penalty max_norm must be > 0");
  for (int c : minority_classes) {
    if (c < 0 || c >= classes) throw ConfigError("minority class " + std::to_string(c) + " out of range");
  }
}

bool penalty_triggered(int true_class, int predicted_class, const PenaltyConfig& cfg) {
  return cfg.minority_classes.contains(true_class) && predicted_class != true_class;
}

double penalty_value(double nel2, const PenaltyConfig& cfg) { return std::min(nel2 / cfg.max_norm, 1.0); }

std::set<int> default_minority_classes(int classes) {
  if (classes == 5) return {1, 2};
  if (classes == 4) return {1, 2, 3};
  return {};
}

}  // namespace depgcn
