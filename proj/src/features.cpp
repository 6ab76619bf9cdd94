#include "depgcn/features.hpp"

#include "depgcn/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <complex>
#include <numbers>

namespace depgcn {

namespace {

constexpr std::array<std::string_view, 5> kPhq9Names = {"Normal", "Mild", "Moderate", "Moderate-to-Major",
                                                        "Major"};
constexpr std::array<std::string_view, 4> kBdiNames = {"Normal", "Mild", "Moderate", "Major"};

std::string normalize_name(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '-' || c == '_' || c == ' ') {
      out.push_back('-');
    } else {
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  return out;
}

void check_band(const BandSpec& band, double fs) {
  if (!(fs > 0.0)) throw ConfigError("sample rate must be positive");
  if (!(band.low_hz > 0.0 && band.low_hz < band.high_hz && band.high_hz < fs / 2.0)) {
    throw ConfigError("band '" + band.name + "' must satisfy 0 < low < high < fs/2 (fs = " + std::to_string(fs) +
                      ")");
  }
}

// Direct form II transposed, one section, in place.
void sos_section(std::vector<double>& x, const double* c) {
  const double b0 = c[0], b1 = c[1], b2 = c[2], a1 = c[3], a2 = c[4];
  double z1 = 0.0, z2 = 0.0;
  for (double& v : x) {
    const double y = b0 * v + z1;
    z1 = b1 * v - a1 * y + z2;
    z2 = b2 * v - a2 * y;
    v = y;
  }
}

}  // namespace

int class_count(Scale scale) { return scale == Scale::PHQ9 ? 5 : 4; }

int max_score(Scale scale) { return scale == Scale::PHQ9 ? 27 : 63; }

int level_from_score(int score, Scale scale) {
  if (score < 0 || score > max_score(scale)) {
    throw RangeError(std::string(scale_name(scale)) + " score " + std::to_string(score) + " outside 0-" +
                     std::to_string(max_score(scale)));
  }
  if (scale == Scale::PHQ9) {
    if (score <= 4) return 0;
    if (score <= 9) return 1;
    if (score <= 14) return 2;
    if (score <= 19) return 3;
    return 4;
  }
  if (score <= 13) return 0;
  if (score <= 19) return 1;
  if (score <= 28) return 2;
  return 3;
}

std::string_view level_name(int level, Scale scale) {
  if (level < 0 || level >= class_count(scale)) throw RangeError("level index out of range");
  return scale == Scale::PHQ9 ? kPhq9Names[static_cast<std::size_t>(level)]
                              : kBdiNames[static_cast<std::size_t>(level)];
}

std::optional<int> level_from_name(std::string_view name, Scale scale) {
  const std::string key = normalize_name(name);
  for (int i = 0; i < class_count(scale); ++i) {
    if (normalize_name(level_name(i, scale)) == key) return i;
  }
  return std::nullopt;
}

std::string_view scale_name(Scale scale) { return scale == Scale::PHQ9 ? "PHQ9" : "BDI"; }

std::vector<BandSpec> default_bands() {
  return {{"delta", 1.0, 4.0}, {"theta", 4.0, 8.0}, {"alpha", 8.0, 13.0}, {"beta", 13.0, 30.0}, {"gamma", 30.0, 50.0}};
}

Eigen::Index SubjectDataset::channels() const { return samples.empty() ? 0 : samples.front().features.rows(); }

Eigen::Index SubjectDataset::bands() const { return samples.empty() ? 0 : samples.front().features.cols(); }

void validate(const SubjectDataset& subject) {
  if (subject.samples.empty()) throw InputError("subject '" + subject.subject_id + "' has no samples");
  const auto rows = subject.channels();
  const auto cols = subject.bands();
  for (const auto& s : subject.samples) {
    if (s.subject_id != subject.subject_id || s.label != subject.label) {
      throw InputError("subject '" + subject.subject_id + "' contains a sample with mismatched id or label");
    }
    if (s.features.rows() != rows || s.features.cols() != cols) {
      throw ShapeError("subject '" + subject.subject_id + "' has samples of differing shape");
    }
    if (!s.features.allFinite()) throw InputError("subject '" + subject.subject_id + "' has non-finite features");
  }
}

std::vector<Eigen::MatrixXd> slice_epochs(const RawRecording& rec, double window_s) {
  if (!(rec.sample_rate_hz > 0.0)) throw ConfigError("sample rate must be positive");
  const double exact = window_s * rec.sample_rate_hz;
  const auto window = static_cast<Eigen::Index>(std::llround(exact));
  if (window <= 0 || std::abs(exact - static_cast<double>(window)) > 1e-9 * std::max(1.0, exact)) {
    throw ConfigError("window length times sample rate must be a positive integer");
  }
  const Eigen::Index count = rec.signal.cols() / window;
  if (rec.signal.rows() == 0 || count == 0) {
    throw InputError("recording '" + rec.subject_id + "' is shorter than one " + std::to_string(window_s) +
                     " s window");
  }
  std::vector<Eigen::MatrixXd> epochs;
  epochs.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index k = 0; k < count; ++k) {
    epochs.emplace_back(rec.signal.middleCols(k * window, window));
  }
  return epochs;
}

Eigen::Matrix<double, 2, 5, Eigen::RowMajor> butterworth_bandpass_sos(const BandSpec& band, double fs) {
  check_band(band, fs);
  using cd = std::complex<double>;
  const double two_fs = 2.0 * fs;
  const double w_lo = two_fs * std::tan(std::numbers::pi * band.low_hz / fs);
  const double w_hi = two_fs * std::tan(std::numbers::pi * band.high_hz / fs);
  const double w0_sq = w_lo * w_hi;
  const double bw = w_hi - w_lo;

  // One prototype pole of the conjugate pair; its mirror yields the conjugate sections.
  const cd proto = std::polar(1.0, 0.75 * std::numbers::pi);
  const cd half = proto * (bw / 2.0);
  const cd root = std::sqrt(half * half - w0_sq);
  const std::array<cd, 2> analog = {half + root, half - root};

  Eigen::Matrix<double, 2, 5, Eigen::RowMajor> sos;
  for (int k = 0; k < 2; ++k) {
    const cd z = (two_fs + analog[static_cast<std::size_t>(k)]) / (two_fs - analog[static_cast<std::size_t>(k)]);
    sos.row(k) << 1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z);
  }

  // Unit gain at the digital image of the geometric centre frequency.
  const double w_center = 2.0 * std::atan(std::sqrt(w0_sq) / two_fs);
  const cd zinv = std::polar(1.0, -w_center);
  cd response = 1.0;
  for (int k = 0; k < 2; ++k) {
    const cd num = sos(k, 0) + sos(k, 1) * zinv + sos(k, 2) * zinv * zinv;
    const cd den = 1.0 + sos(k, 3) * zinv + sos(k, 4) * zinv * zinv;
    response *= num / den;
  }
  sos.row(0).head<3>() /= std::abs(response);
  return sos;
}

Eigen::MatrixXd bandpass_filter(const Eigen::MatrixXd& epoch, const BandSpec& band, double fs) {
  const auto sos = butterworth_bandpass_sos(band, fs);
  const Eigen::Index n = epoch.cols();
  Eigen::MatrixXd out(epoch.rows(), n);
  if (n == 0) return out;
  const Eigen::Index pad =
      std::min<Eigen::Index>(n - 1, 3 * static_cast<Eigen::Index>(std::ceil(fs / band.low_hz)));

  std::vector<double> buf(static_cast<std::size_t>(n + 2 * pad));
  for (Eigen::Index c = 0; c < epoch.rows(); ++c) {
    const auto x = epoch.row(c);
    for (Eigen::Index i = 0; i < pad; ++i) {
      buf[static_cast<std::size_t>(i)] = x(pad - i);
      buf[static_cast<std::size_t>(pad + n + i)] = x(n - 2 - i);
    }
    for (Eigen::Index i = 0; i < n; ++i) buf[static_cast<std::size_t>(pad + i)] = x(i);

    for (int pass = 0; pass < 2; ++pass) {
      for (int k = 0; k < 2; ++k) sos_section(buf, sos.row(k).data());
      std::reverse(buf.begin(), buf.end());
    }
    for (Eigen::Index i = 0; i < n; ++i) out(c, i) = buf[static_cast<std::size_t>(pad + i)];
  }
  return out;
}

double differential_entropy(std::span<const double> series) {
  if (series.size() < 2) throw InputError("differential entropy needs at least 2 samples");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(series.size());
  double ss = 0.0;
  for (double v : series) ss += (v - mean) * (v - mean);
  const double var = ss / static_cast<double>(series.size() - 1);
  return 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e * std::max(var, kVarianceFloor));
}

Eigen::MatrixXd epoch_features(const Eigen::MatrixXd& epoch, std::span<const BandSpec> bands, double fs) {
  Eigen::MatrixXd feats(epoch.rows(), static_cast<Eigen::Index>(bands.size()));
  std::vector<double> row(static_cast<std::size_t>(epoch.cols()));
  for (std::size_t b = 0; b < bands.size(); ++b) {
    const Eigen::MatrixXd filtered = bandpass_filter(epoch, bands[b], fs);
    for (Eigen::Index c = 0; c < epoch.rows(); ++c) {
      Eigen::Map<Eigen::RowVectorXd>(row.data(), epoch.cols()) = filtered.row(c);
      feats(c, static_cast<Eigen::Index>(b)) = differential_entropy(row);
    }
  }
  return feats;
}

SubjectDataset extract_features(const RawRecording& rec, std::span<const BandSpec> bands) {
  if (bands.size() != 5) throw ConfigError("exactly 5 frequency bands are required");
  for (const auto& band : bands) check_band(band, rec.sample_rate_hz);
  if (!rec.score) throw InputError("recording '" + rec.subject_id + "' has no questionnaire score to label from");

  SubjectDataset out;
  out.subject_id = rec.subject_id;
  out.score = rec.score;
  out.label = level_from_score(*rec.score, rec.scale);

  const auto epochs = slice_epochs(rec, 2.0);
  out.samples.reserve(epochs.size());
  for (std::size_t k = 0; k < epochs.size(); ++k) {
    out.samples.push_back(
        {rec.subject_id, static_cast<std::uint32_t>(k), epoch_features(epochs[k], bands, rec.sample_rate_hz), out.label});
  }
  return out;
}

}  // namespace depgcn
