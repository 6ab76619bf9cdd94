#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace depgcn {

enum class Scale : std::uint8_t { PHQ9 = 0, BDI = 1 };

/// Number of severity classes a questionnaire maps onto (5 for PHQ-9, 4 for BDI).
int class_count(Scale scale);

/// Highest valid questionnaire score (27 for PHQ-9, 63 for BDI).
int max_score(Scale scale);

/// Class indices are ordered by severity, Normal = 0. PHQ-9 uses
/// {Normal, Mild, Moderate, Moderate-to-Major, Major}; BDI has no
/// Moderate-to-Major level, so Major is index 3 there.
int level_from_score(int score, Scale scale);

std::string_view level_name(int level, Scale scale);

/// Inverse of level_name; accepts the names case-insensitively with '-', '_'
/// and ' ' treated alike. Returns nullopt for unknown names.
std::optional<int> level_from_name(std::string_view name, Scale scale);

std::string_view scale_name(Scale scale);

struct RawRecording {
  std::string subject_id;
  double sample_rate_hz = 0.0;
  Eigen::MatrixXd signal;  // channels x samples, microvolts
  std::optional<int> score;
  Scale scale = Scale::PHQ9;
};

struct BandSpec {
  std::string name;
  double low_hz = 0.0;
  double high_hz = 0.0;
};

/// delta 1-4, theta 4-8, alpha 8-13, beta 13-30, gamma 30-50 Hz.
std::vector<BandSpec> default_bands();

struct FeatureSample {
  std::string subject_id;
  std::uint32_t epoch_index = 0;
  Eigen::MatrixXd features;  // channels x bands, nats
  int label = 0;
};

struct SubjectDataset {
  std::string subject_id;
  int label = 0;
  std::vector<FeatureSample> samples;
  std::optional<int> score;

  Eigen::Index channels() const;
  Eigen::Index bands() const;
};

/// Throws InputError unless every sample shares the subject id and label,
/// the list is non-empty, and all entries are finite with equal shapes.
void validate(const SubjectDataset& subject);

/// Non-overlapping windows of `window_s` seconds; a trailing partial window is dropped.
std::vector<Eigen::MatrixXd> slice_epochs(const RawRecording& rec, double window_s = 2.0);

/// Second-order sections of a 4th-order Butterworth band-pass (2nd-order
/// prototype through the band-pass transform, bilinear with prewarping).
/// Each row is b0 b1 b2 a1 a2 with a0 = 1; the gain is folded into the first row.
Eigen::Matrix<double, 2, 5, Eigen::RowMajor> butterworth_bandpass_sos(const BandSpec& band, double fs);

/// Zero-phase (forward-backward) band-pass of every row of `epoch`, with
/// mirror (even) padding at both ends.
Eigen::MatrixXd bandpass_filter(const Eigen::MatrixXd& epoch, const BandSpec& band, double fs);

inline constexpr double kVarianceFloor = 1e-12;

/// 0.5 * ln(2*pi*e * max(var, floor)) with the unbiased sample variance.
double differential_entropy(std::span<const double> series);

/// channels x bands DE matrix for one epoch.
Eigen::MatrixXd epoch_features(const Eigen::MatrixXd& epoch, std::span<const BandSpec> bands, double fs);

/// Slices, filters and computes DE for every epoch. The label comes from the
/// recording's score, so a recording without a score is rejected.
SubjectDataset extract_features(const RawRecording& rec, std::span<const BandSpec> bands);

}  // namespace depgcn
