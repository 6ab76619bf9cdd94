#pragma once

#include "depgcn/features.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace depgcn {

/// Synthetic DE-feature generator. Each class owns a mean tensor placed on a
/// scaled regular simplex, each subject adds a fixed offset, each epoch adds
/// i.i.d. Gaussian noise. A fraction of subjects store a wrong label while
/// their data keep following the true class.
struct SynthConfig {
  int channels = 8;
  int bands = 5;
  int epochs_per_subject = 60;
  std::vector<int> counts_per_class = {8, 8, 8, 8, 8};
  double class_sep = 6.0;
  double subject_sd = 0.5;
  double epoch_sd = 1.0;
  double flip_fraction = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  int classes() const { return static_cast<int>(counts_per_class.size()); }
  int subjects() const;
  /// Number of subjects whose stored label is corrupted.
  int flip_count() const;
};

struct SubjectTruth {
  int true_class = 0;
  int stored_label = 0;
  bool flipped = false;
};

struct SynthTruth {
  std::map<std::string, SubjectTruth> subjects;
};

struct SynthDataset {
  std::vector<SubjectDataset> subjects;
  SynthTruth truth;
};

/// Subjects are named "s000", "s001", ... in class order. Features are
/// rounded to float precision so that they survive the feature-store format
/// bit for bit.
SynthDataset generate(const SynthConfig& cfg);

/// Class means: rows of a (classes x channels*bands) matrix with all pairwise
/// distances equal to class_sep.
Eigen::MatrixXd class_means(const SynthConfig& cfg);

struct ClassFlipCounts {
  int flipped = 0;
  int clean = 0;
};

struct FlipReport {
  std::vector<ClassFlipCounts> per_class;  // indexed by true class
  int flipped_total = 0;
  int clean_total = 0;
};

FlipReport flip_report(const SynthTruth& truth, int classes);

}  // namespace depgcn
