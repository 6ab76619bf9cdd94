#include "depgcn/synth.hpp"

#include "depgcn/errors.hpp"
#include "depgcn/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

namespace depgcn {

namespace {

// Fixed rotation so class signal is spread over every channel and band
// instead of sitting on the first few coordinates.
constexpr std::uint64_t kRotationSeed = 0x5eedc1a55ULL;

std::string subject_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "s%03d", index);
  return buf;
}

}  // namespace

void SynthConfig::validate() const {
  if (channels < 1 || bands < 1) throw ConfigError("synth: channels and bands must be >= 1");
  if (epochs_per_subject < 1) throw ConfigError("synth: epochs_per_subject must be >= 1");
  if (counts_per_class.empty()) throw ConfigError("synth: counts_per_class is empty");
  if (std::ranges::any_of(counts_per_class, [](int c) { return c < 0; })) {
    throw ConfigError("synth: class counts must be non-negative");
  }
  if (subjects() < 3) throw ConfigError("synth: need at least 3 subjects in total");
  if (classes() > channels * bands) throw ConfigError("synth: more classes than feature dimensions");
  if (!(class_sep > 0.0)) throw ConfigError("synth: class_sep must be > 0");
  if (!(subject_sd >= 0.0) || !(epoch_sd >= 0.0)) throw ConfigError("synth: standard deviations must be >= 0");
  if (!(flip_fraction >= 0.0 && flip_fraction < 1.0)) throw ConfigError("synth: flip_fraction must lie in [0, 1)");
  if (flip_count() > 0 && classes() < 2) throw ConfigError("synth: cannot flip labels with a single class");
  int flippable = 0;
  for (int c : counts_per_class) flippable += std::max(c - 1, 0);
  if (flip_count() > flippable) {
    throw ConfigError("synth: flip_fraction needs " + std::to_string(flip_count()) +
                      " flips but at most all-but-one subject per class may flip (" + std::to_string(flippable) + ")");
  }
}

int SynthConfig::subjects() const { return std::accumulate(counts_per_class.begin(), counts_per_class.end(), 0); }

int SynthConfig::flip_count() const {
  return static_cast<int>(std::lround(flip_fraction * static_cast<double>(subjects())));
}

Eigen::MatrixXd class_means(const SynthConfig& cfg) {
  const int n = cfg.classes();
  const int dim = cfg.channels * cfg.bands;
  // Unit basis vectors are pairwise sqrt(2) apart; centre and rescale.
  Eigen::MatrixXd simplex = Eigen::MatrixXd::Zero(n, dim);
  for (int c = 0; c < n; ++c) simplex(c, c) = 1.0;
  simplex.rowwise() -= simplex.colwise().mean();
  simplex *= cfg.class_sep / std::sqrt(2.0);

  std::mt19937_64 rng(kRotationSeed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd g(dim, dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    for (Eigen::Index i = 0; i < dim; ++i) g(i, j) = normal(rng);
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  return simplex * q.transpose();
}

SynthDataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const int n_classes = cfg.classes();
  const int total = cfg.subjects();
  const Eigen::MatrixXd means = class_means(cfg);

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal;

  std::vector<int> true_class;
  true_class.reserve(static_cast<std::size_t>(total));
  for (int c = 0; c < n_classes; ++c) true_class.insert(true_class.end(), static_cast<std::size_t>(cfg.counts_per_class[static_cast<std::size_t>(c)]), c);

  // Flip selection: random subject order, skipping a subject whenever it
  // would leave its class without a clean member.
  std::vector<int> order(static_cast<std::size_t>(total));
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<int> clean_left(cfg.counts_per_class.begin(), cfg.counts_per_class.end());
  std::vector<int> stored = true_class;
  int to_flip = cfg.flip_count();
  std::uniform_int_distribution<int> other(0, std::max(n_classes - 2, 0));
  for (int idx : order) {
    if (to_flip == 0) break;
    const int c = true_class[static_cast<std::size_t>(idx)];
    if (clean_left[static_cast<std::size_t>(c)] < 2) continue;
    --clean_left[static_cast<std::size_t>(c)];
    const int draw = other(rng);
    stored[static_cast<std::size_t>(idx)] = draw >= c ? draw + 1 : draw;
    --to_flip;
  }

  SynthDataset out;
  out.subjects.reserve(static_cast<std::size_t>(total));
  for (int s = 0; s < total; ++s) {
    const auto id = subject_name(s);
    const int c = true_class[static_cast<std::size_t>(s)];
    Eigen::MatrixXd offset(cfg.channels, cfg.bands);
    for (int ch = 0; ch < cfg.channels; ++ch) {
      for (int b = 0; b < cfg.bands; ++b) offset(ch, b) = means(c, ch * cfg.bands + b) + cfg.subject_sd * normal(rng);
    }
    SubjectDataset subject;
    subject.subject_id = id;
    subject.label = stored[static_cast<std::size_t>(s)];
    for (int e = 0; e < cfg.epochs_per_subject; ++e) {
      Eigen::MatrixXd x(cfg.channels, cfg.bands);
      for (int ch = 0; ch < cfg.channels; ++ch) {
        for (int b = 0; b < cfg.bands; ++b) x(ch, b) = offset(ch, b) + cfg.epoch_sd * normal(rng);
      }
      subject.samples.push_back({id, static_cast<std::uint32_t>(e), std::move(x), subject.label});
    }
    io::quantize_to_f32(subject);
    out.truth.subjects[id] = {c, subject.label, subject.label != c};
    out.subjects.push_back(std::move(subject));
  }
  return out;
}

FlipReport flip_report(const SynthTruth& truth, int classes) {
  FlipReport r;
  r.per_class.resize(static_cast<std::size_t>(std::max(classes, 0)));
  for (const auto& [id, t] : truth.subjects) {
    if (t.true_class < 0 || t.true_class >= classes) throw InputError("truth entry '" + id + "' has class out of range");
    auto& slot = r.per_class[static_cast<std::size_t>(t.true_class)];
    if (t.flipped) {
      ++slot.flipped;
      ++r.flipped_total;
    } else {
      ++slot.clean;
      ++r.clean_total;
    }
  }
  return r;
}

}  // namespace depgcn
