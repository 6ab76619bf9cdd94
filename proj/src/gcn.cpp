#include "depgcn/gcn.hpp"

#include "binary.hpp"
#include "depgcn/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace depgcn {

namespace {

using RowMajorMap = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using ConstRowMajorMap = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

void check_shape(const Eigen::MatrixXd& x, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (x.rows() != rows || x.cols() != cols) {
    throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                     std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
  }
}

void glorot(Eigen::MatrixXd& w, int fan_in, int fan_out, std::mt19937_64& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-a, a);
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = dist(rng);
  }
}

// Pulls a gradient w.r.t. A_hat back to the raw adjacency.
Eigen::MatrixXd adjacency_backward(const Eigen::MatrixXd& raw, const Eigen::MatrixXd& grad_hat) {
  const Eigen::Index c = raw.rows();
  const Eigen::MatrixXd sym = raw + raw.transpose();
  Eigen::MatrixXd tilde = sym.unaryExpr([](double v) { return softplus(v); });
  tilde.diagonal().array() += 1.0;
  const Eigen::VectorXd degree = tilde.rowwise().sum();
  const Eigen::VectorXd r = degree.array().rsqrt();

  Eigen::MatrixXd grad_tilde = grad_hat.array() * (r * r.transpose()).array();
  // A_hat_ij = r_i * tilde_ij * r_j; r_i appears in row i and column i.
  const Eigen::MatrixXd gt = grad_hat.array() * tilde.array();
  const Eigen::VectorXd grad_r = gt * r + gt.transpose() * r;
  const Eigen::VectorXd grad_degree = grad_r.array() * (-0.5) * r.array().cube();
  grad_tilde.colwise() += grad_degree;

  Eigen::MatrixXd grad_sym(c, c);
  for (Eigen::Index j = 0; j < c; ++j) {
    for (Eigen::Index i = 0; i < c; ++i) grad_sym(i, j) = grad_tilde(i, j) * sigmoid(sym(i, j));
  }
  return grad_sym + grad_sym.transpose();
}

void check_labels(const ModelConfig& cfg, const BatchItem& item) {
  if (cfg.head_mode == HeadMode::Classification && (item.class_label < 0 || item.class_label >= cfg.classes)) {
    throw InputError("class label " + std::to_string(item.class_label) + " out of range");
  }
  if (item.domain_label < 0 || item.domain_label >= cfg.domains) {
    throw InputError("domain label " + std::to_string(item.domain_label) + " out of range");
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (channels < 1 || bands < 1 || hidden < 1 || classes < 1 || domains < 1) {
    throw ConfigError("model sizes (channels, bands, hidden, classes, domains) must all be >= 1");
  }
  if (!(grl_lambda >= 0.0)) throw ConfigError("grl_lambda must be >= 0");
}

ModelParams ModelParams::zeros(const ModelConfig& cfg) {
  cfg.validate();
  const int width = cfg.feature_width();
  ModelParams p;
  p.attention = Eigen::MatrixXd::Zero(cfg.channels, cfg.bands);
  p.adjacency_raw = Eigen::MatrixXd::Zero(cfg.channels, cfg.channels);
  p.conv_weight = Eigen::MatrixXd::Zero(cfg.bands, cfg.hidden);
  p.class_weight = Eigen::MatrixXd::Zero(width, cfg.classes);
  p.class_bias = Eigen::MatrixXd::Zero(cfg.classes, 1);
  p.domain_weight = Eigen::MatrixXd::Zero(width, cfg.domains);
  p.domain_bias = Eigen::MatrixXd::Zero(cfg.domains, 1);
  p.regression_weight = Eigen::MatrixXd::Zero(width, 1);
  p.regression_bias = Eigen::MatrixXd::Zero(1, 1);
  return p;
}

bool ModelParams::all_finite() const {
  return std::ranges::all_of(tensors(), [](const Eigen::MatrixXd* t) { return t->allFinite(); });
}

bool ModelParams::operator==(const ModelParams& other) const {
  const auto a = tensors();
  const auto b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i]->rows() != b[i]->rows() || a[i]->cols() != b[i]->cols()) return false;
    if (std::memcmp(a[i]->data(), b[i]->data(), sizeof(double) * static_cast<std::size_t>(a[i]->size())) != 0) {
      return false;
    }
  }
  return true;
}

ModelParams init_params(const ModelConfig& cfg) {
  ModelParams p = ModelParams::zeros(cfg);
  std::mt19937_64 rng(cfg.seed);
  const int width = cfg.feature_width();
  glorot(p.conv_weight, cfg.bands, cfg.hidden, rng);
  glorot(p.class_weight, width, cfg.classes, rng);
  glorot(p.domain_weight, width, cfg.domains, rng);
  glorot(p.regression_weight, width, 1, rng);
  return p;
}

Eigen::MatrixXd apply_attention(const Eigen::MatrixXd& x, const Eigen::MatrixXd& attention) {
  check_shape(x, attention.rows(), attention.cols(), "apply_attention");
  return x.array() * attention.unaryExpr([](double v) { return sigmoid(v); }).array();
}

Eigen::MatrixXd normalize_adjacency(const Eigen::MatrixXd& adjacency_raw) {
  if (adjacency_raw.rows() != adjacency_raw.cols()) throw ShapeError("adjacency must be square");
  Eigen::MatrixXd tilde = (adjacency_raw + adjacency_raw.transpose()).unaryExpr([](double v) { return softplus(v); });
  tilde.diagonal().array() += 1.0;
  const Eigen::VectorXd r = tilde.rowwise().sum().array().rsqrt();
  return r.asDiagonal() * tilde * r.asDiagonal();
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) { return (logits.array() - log_sum_exp(logits)).exp(); }

ForwardOutput forward(const ModelParams& params, const ModelConfig& cfg, const Eigen::MatrixXd& x) {
  return forward(params, cfg, normalize_adjacency(params.adjacency_raw), x);
}

ForwardOutput forward(const ModelParams& params, const ModelConfig& cfg, const Eigen::MatrixXd& adjacency,
                      const Eigen::MatrixXd& x) {
  check_shape(x, cfg.channels, cfg.bands, "forward input");
  if (!x.allFinite()) throw InputError("forward input contains non-finite values");

  ForwardOutput out;
  auto& cache = out.cache;
  cache.gate = params.attention.unaryExpr([](double v) { return sigmoid(v); });
  cache.gated = x.array() * cache.gate.array();
  cache.propagated = adjacency * cache.gated;
  cache.pre_relu = cache.propagated * params.conv_weight;
  cache.flat.resize(cfg.feature_width());
  RowMajorMap(cache.flat.data(), cfg.channels, cfg.hidden) = cache.pre_relu.cwiseMax(0.0);

  out.class_probs = softmax(params.class_weight.transpose() * cache.flat + params.class_bias.col(0));
  out.domain_probs = softmax(params.domain_weight.transpose() * cache.flat + params.domain_bias.col(0));
  if (cfg.head_mode == HeadMode::Regression) {
    out.regression_score = params.regression_weight.col(0).dot(cache.flat) + params.regression_bias(0, 0);
  }
  return out;
}

LossAndGradients loss_and_gradients(const ModelParams& params, const ModelConfig& cfg,
                                    std::span<const BatchItem> batch, double weight) {
  if (batch.empty()) throw InputError("loss_and_gradients: empty batch");
  if (!(weight >= 0.0)) throw InputError("loss weight must be >= 0");
  for (const auto& item : batch) check_labels(cfg, item);

  LossAndGradients res{{}, Gradients::zeros(cfg)};
  auto& g = res.grads;
  const double inv_r = 1.0 / static_cast<double>(batch.size());
  const double scale = weight * inv_r;
  const Eigen::MatrixXd adjacency = normalize_adjacency(params.adjacency_raw);
  Eigen::MatrixXd grad_adjacency = Eigen::MatrixXd::Zero(cfg.channels, cfg.channels);
  Eigen::VectorXd grad_flat(cfg.feature_width());
  Eigen::MatrixXd grad_pre(cfg.channels, cfg.hidden);

  for (const auto& item : batch) {
    const auto out = forward(params, cfg, adjacency, item.features.get());
    const auto& cache = out.cache;

    if (cfg.head_mode == HeadMode::Classification) {
      res.loss.class_loss -= std::log(out.class_probs(item.class_label));
      Eigen::VectorXd grad_logits = out.class_probs * scale;
      grad_logits(item.class_label) -= scale;
      g.class_weight.noalias() += cache.flat * grad_logits.transpose();
      g.class_bias.col(0) += grad_logits;
      grad_flat.noalias() = params.class_weight * grad_logits;
    } else {
      const double err = *out.regression_score - item.regression_target;
      res.loss.class_loss += err * err;
      const double grad_score = 2.0 * err * scale;
      g.regression_weight.col(0) += cache.flat * grad_score;
      g.regression_bias(0, 0) += grad_score;
      grad_flat = params.regression_weight.col(0) * grad_score;
    }

    res.loss.domain_loss -= std::log(out.domain_probs(item.domain_label));
    Eigen::VectorXd grad_domain = out.domain_probs * scale;
    grad_domain(item.domain_label) -= scale;
    g.domain_weight.noalias() += cache.flat * grad_domain.transpose();
    g.domain_bias.col(0) += grad_domain;
    // Gradient reversal into the shared trunk.
    grad_flat.noalias() -= cfg.grl_lambda * (params.domain_weight * grad_domain);

    grad_pre = ConstRowMajorMap(grad_flat.data(), cfg.channels, cfg.hidden);
    grad_pre.array() *= (cache.pre_relu.array() > 0.0).cast<double>();

    g.conv_weight.noalias() += cache.propagated.transpose() * grad_pre;
    const Eigen::MatrixXd grad_prop = grad_pre * params.conv_weight.transpose();
    grad_adjacency.noalias() += grad_prop * cache.gated.transpose();
    const Eigen::MatrixXd grad_gated = adjacency.transpose() * grad_prop;
    g.attention.array() +=
        grad_gated.array() * item.features.get().array() * cache.gate.array() * (1.0 - cache.gate.array());
  }
  g.adjacency_raw = adjacency_backward(params.adjacency_raw, grad_adjacency);

  res.loss.class_loss *= inv_r;
  res.loss.domain_loss *= inv_r;
  res.loss.total = weight * (res.loss.class_loss + res.loss.domain_loss);
  return res;
}

LossBreakdown batch_loss(const ModelParams& params, const ModelConfig& cfg, std::span<const BatchItem> batch,
                         double weight) {
  if (batch.empty()) throw InputError("batch_loss: empty batch");
  LossBreakdown loss;
  const Eigen::MatrixXd adjacency = normalize_adjacency(params.adjacency_raw);
  for (const auto& item : batch) {
    check_labels(cfg, item);
    const auto out = forward(params, cfg, adjacency, item.features.get());
    if (cfg.head_mode == HeadMode::Classification) {
      loss.class_loss -= std::log(out.class_probs(item.class_label));
    } else {
      const double err = *out.regression_score - item.regression_target;
      loss.class_loss += err * err;
    }
    loss.domain_loss -= std::log(out.domain_probs(item.domain_label));
  }
  const double inv_r = 1.0 / static_cast<double>(batch.size());
  loss.class_loss *= inv_r;
  loss.domain_loss *= inv_r;
  loss.total = weight * (loss.class_loss + loss.domain_loss);
  return loss;
}

Momentum Momentum::zeros_like(const ModelConfig& cfg, double mu) { return {ModelParams::zeros(cfg), mu}; }

void sgd_step(ModelParams& params, const Gradients& grads, double lr, Momentum& state) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
  auto p = params.tensors();
  auto v = state.velocity.tensors();
  const auto g = grads.tensors();
  for (std::size_t i = 0; i < p.size(); ++i) {
    *v[i] = state.mu * *v[i] + *g[i];
    *p[i] -= lr * *v[i];
  }
}

std::map<std::string, int> ssp_partition(std::span<const SubjectDataset* const> subjects, int domains,
                                         std::uint64_t seed, const std::function<void(const std::string&)>& on_input) {
  if (domains < 1) throw ConfigError("domain count must be >= 1");
  if (static_cast<std::size_t>(domains) > subjects.size()) {
    throw ConfigError("domain count " + std::to_string(domains) + " exceeds " + std::to_string(subjects.size()) +
                      " training subjects");
  }
  const auto n = static_cast<Eigen::Index>(subjects.size());
  Eigen::Index dim = 0;
  for (const auto* s : subjects) {
    if (on_input) on_input(s->subject_id);
    validate(*s);
    dim = s->channels() * s->bands();
  }

  // Row i = flattened (row-major) mean feature matrix of subject i.
  Eigen::MatrixXd points(n, dim);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& s = *subjects[static_cast<std::size_t>(i)];
    if (s.channels() * s.bands() != dim) throw ShapeError("subjects disagree on feature shape");
    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(s.channels(), s.bands());
    for (const auto& smp : s.samples) mean += smp.features;
    mean /= static_cast<double>(s.samples.size());
    for (Eigen::Index c = 0; c < mean.rows(); ++c) {
      for (Eigen::Index b = 0; b < mean.cols(); ++b) points(i, c * mean.cols() + b) = mean(c, b);
    }
  }

  std::map<std::string, int> result;
  if (domains == 1) {
    for (const auto* s : subjects) result[s->subject_id] = 0;
    return result;
  }

  // k-means++ seeding.
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd centroids(domains, dim);
  centroids.row(0) = points.row(std::uniform_int_distribution<Eigen::Index>(0, n - 1)(rng));
  Eigen::VectorXd nearest = (points.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int k = 1; k < domains; ++k) {
    const double total = nearest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      double target = std::uniform_real_distribution<double>(0.0, total)(rng);
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= nearest(i);
        if (target < 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = k;
    }
    centroids.row(k) = points.row(pick);
    nearest = nearest.cwiseMin((points.rowwise() - centroids.row(k)).rowwise().squaredNorm());
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 100; ++iter) {
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best = 0;
      (centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
      assign[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(domains, dim);
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(domains);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
      counts(assign[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int k = 0; k < domains; ++k) {
      if (counts(k) > 0.0) {
        next.row(k) /= counts(k);
        continue;
      }
      // Empty cluster: move it onto the point worst served by its centroid.
      Eigen::Index far = 0;
      double worst = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double d = (points.row(i) - next.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
        if (d > worst) {
          worst = d;
          far = i;
        }
      }
      next.row(k) = points.row(far);
    }
    const double moved = (next - centroids).rowwise().norm().maxCoeff();
    centroids = std::move(next);
    if (moved < 1e-8) break;
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index best = 0;
    (centroids.rowwise() - points.row(i)).rowwise().squaredNorm().minCoeff(&best);
    result[subjects[static_cast<std::size_t>(i)]->subject_id] = static_cast<int>(best);
  }
  return result;
}

std::map<std::string, int> ssp_partition(const std::vector<SubjectDataset>& subjects, int domains,
                                         std::uint64_t seed) {
  std::vector<const SubjectDataset*> refs;
  refs.reserve(subjects.size());
  for (const auto& s : subjects) refs.push_back(&s);
  return ssp_partition(refs, domains, seed);
}

int argmax_lowest(const Eigen::VectorXd& v) {
  int best = 0;
  for (Eigen::Index i = 1; i < v.size(); ++i) {
    if (v(i) > v(best)) best = static_cast<int>(i);
  }
  return best;
}

SubjectPrediction predict_subject(const ModelParams& params, const ModelConfig& cfg, const SubjectDataset& subject) {
  if (subject.samples.empty()) throw InputError("subject '" + subject.subject_id + "' has no samples");
  const Eigen::MatrixXd adjacency = normalize_adjacency(params.adjacency_raw);
  SubjectPrediction pred;
  pred.mean_probs = Eigen::VectorXd::Zero(cfg.classes);
  double reg = 0.0;
  for (const auto& s : subject.samples) {
    const auto out = forward(params, cfg, adjacency, s.features);
    pred.mean_probs += out.class_probs;
    if (out.regression_score) reg += *out.regression_score;
  }
  const double inv = 1.0 / static_cast<double>(subject.samples.size());
  pred.mean_probs *= inv;
  pred.predicted_class = argmax_lowest(pred.mean_probs);
  if (cfg.head_mode == HeadMode::Regression) pred.mean_regression = reg * inv;
  return pred;
}

void save_checkpoint(const ModelParams& params, const ModelConfig& cfg, const std::filesystem::path& path) {
  detail::ByteWriter w;
  w.magic("DGCN");
  w.put<std::uint32_t>(1);
  for (int v : {cfg.channels, cfg.bands, cfg.hidden, cfg.classes, cfg.domains}) w.put<std::uint32_t>(static_cast<std::uint32_t>(v));
  w.put<double>(cfg.grl_lambda);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(cfg.head_mode));
  w.put<std::uint64_t>(cfg.seed);
  w.put<std::uint32_t>(ModelParams::kTensorCount);
  for (const auto* t : params.tensors()) {
    w.put<std::uint32_t>(2);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t->rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t->cols()));
    for (Eigen::Index i = 0; i < t->rows(); ++i) {
      for (Eigen::Index j = 0; j < t->cols(); ++j) w.put<double>((*t)(i, j));
    }
  }
  w.save(path);
}

std::pair<ModelParams, ModelConfig> load_checkpoint(const std::filesystem::path& path) {
  auto r = detail::ByteReader::load(path);
  r.expect_magic("DGCN");
  r.expect_version(1);
  ModelConfig cfg;
  cfg.channels = static_cast<int>(r.get<std::uint32_t>());
  cfg.bands = static_cast<int>(r.get<std::uint32_t>());
  cfg.hidden = static_cast<int>(r.get<std::uint32_t>());
  cfg.classes = static_cast<int>(r.get<std::uint32_t>());
  cfg.domains = static_cast<int>(r.get<std::uint32_t>());
  cfg.grl_lambda = r.get<double>();
  const auto mode = r.get<std::uint8_t>();
  if (mode > 1) throw FormatError(r.source() + ": unknown head mode");
  cfg.head_mode = static_cast<HeadMode>(mode);
  cfg.seed = r.get<std::uint64_t>();
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw FormatError(r.source() + ": " + e.what());
  }
  if (r.get<std::uint32_t>() != ModelParams::kTensorCount) throw FormatError(r.source() + ": unexpected tensor count");
  ModelParams params = ModelParams::zeros(cfg);
  auto tensors = params.tensors();
  for (std::size_t k = 0; k < tensors.size(); ++k) {
    auto& t = *tensors[k];
    const auto rank = r.get<std::uint32_t>();
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (rank != 2 || rows != t.rows() || cols != t.cols()) {
      throw FormatError(r.source() + ": tensor '" + ModelParams::kNames[k] + "' has unexpected dimensions");
    }
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = r.get<double>();
    }
  }
  r.expect_end();
  return {std::move(params), cfg};
}

}  // namespace depgcn
