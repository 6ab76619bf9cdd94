// depgcn: feature extraction, synthetic data, training and leave-one-subject-out
// evaluation from the command line.
//
// Exit codes: 0 success, 1 usage or configuration, 2 input data, 3 internal.

#include "depgcn/errors.hpp"
#include "depgcn/features.hpp"
#include "depgcn/io.hpp"
#include "depgcn/report.hpp"
#include "depgcn/runconfig.hpp"
#include "depgcn/synth.hpp"
#include "depgcn/trainer.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

struct GlobalOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  int folds_parallel = 1;
  bool no_confidence = false;
  bool no_penalty = false;
  bool no_history = false;
};

class Manifest {
 public:
  explicit Manifest(std::string command) : command_(std::move(command)), start_(std::chrono::steady_clock::now()) {}

  void config(const std::vector<std::pair<std::string, std::string>>& kv) {
    for (const auto& [k, v] : kv) config_[k] = v;
  }
  void input(const fs::path& p) { inputs_.push_back(p.string()); }
  void output(const fs::path& p) { outputs_.push_back(p.string()); }
  void seed(std::uint64_t s) { seed_ = s; }

  void write(const fs::path& dir) {
    const auto path = dir / "manifest.json";
    output(path);
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    Json doc;
    doc["command"] = command_;
    doc["config"] = config_;
    doc["inputs"] = inputs_;
    doc["outputs"] = outputs_;
    doc["seed"] = seed_;
    doc["version"] = DEPGCN_VERSION;
    doc["duration_s"] = seconds;
    depgcn::report::write_text(path, doc.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::chrono::steady_clock::time_point start_;
  Json config_ = Json::object();
  std::vector<std::string> inputs_, outputs_;
  std::uint64_t seed_ = 0;
};

fs::path require_out(const GlobalOptions& g) {
  if (g.out.empty()) throw depgcn::ConfigError("--out is required for this command");
  fs::create_directories(g.out);
  return g.out;
}

std::vector<depgcn::BandSpec> parse_bands(const std::string& text) {
  if (text.empty()) return depgcn::default_bands();
  std::vector<depgcn::BandSpec> bands;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    const auto dash = item.find('-', colon == std::string::npos ? 0 : colon);
    if (colon == std::string::npos || dash == std::string::npos) {
      throw depgcn::ConfigError("band '" + item + "' must look like name:low-high");
    }
    try {
      bands.push_back({item.substr(0, colon), std::stod(item.substr(colon + 1, dash - colon - 1)),
                       std::stod(item.substr(dash + 1))});
    } catch (const std::logic_error&) {
      throw depgcn::ConfigError("band '" + item + "' has non-numeric edges");
    }
  }
  return bands;
}

// Run configuration: the class count defaults to what the data show, the
// file overrides that, and flags override the file.
depgcn::TrainConfig load_train_config(const GlobalOptions& g, const std::vector<depgcn::SubjectDataset>& data) {
  int max_label = 0;
  for (const auto& s : data) max_label = std::max(max_label, s.label);
  const int inferred = std::max(max_label + 1, 2);
  depgcn::KeyValues kv;
  if (!g.config.empty()) kv = depgcn::KeyValues::load(g.config);

  int classes = inferred;
  if (const auto it = kv.entries.find("classes"); it != kv.entries.end()) {
    depgcn::TrainConfig probe;
    depgcn::KeyValues only;
    only.source = kv.source;
    only.entries["classes"] = it->second;
    depgcn::apply(only, probe);
    classes = probe.model.classes;
  }
  depgcn::TrainConfig cfg = depgcn::default_train_config(classes);
  depgcn::apply(kv, cfg);
  if (g.seed) cfg.seed = *g.seed;
  if (g.no_confidence) cfg.enable_confidence = false;
  if (g.no_penalty) cfg.enable_penalty = false;
  cfg.validate();
  if (!cfg.regression() && max_label >= cfg.model.classes) {
    throw depgcn::InputError("data contain label " + std::to_string(max_label) + " but the run has " +
                             std::to_string(cfg.model.classes) + " classes");
  }
  return cfg;
}

std::vector<depgcn::SubjectDataset> load_features(const fs::path& dir, Manifest& m) {
  auto data = depgcn::io::read_feature_store(dir);
  m.input(dir);
  return data;
}

int cmd_extract(const GlobalOptions& g, const std::string& raw_dir, const std::string& bands_text) {
  Manifest m("extract");
  const auto bands = parse_bands(bands_text);
  const auto files = depgcn::io::list_recordings(raw_dir);
  if (files.empty()) throw depgcn::InputError("no recordings found in '" + raw_dir + "'");
  const fs::path out = require_out(g);
  std::vector<depgcn::SubjectDataset> subjects;
  for (const auto& f : files) {
    try {
      const auto rec = depgcn::io::read_recording(f);
      subjects.push_back(depgcn::extract_features(rec, bands));
      const auto& s = subjects.back();
      std::printf("%s: %zu epochs, %ld channels, label %d\n", s.subject_id.c_str(), s.samples.size(),
                  static_cast<long>(s.channels()), s.label);
    } catch (const depgcn::InputError& e) {
      const std::string what = e.what();
      if (what.rfind(f.string(), 0) == 0) throw;
      throw depgcn::InputError(f.string() + ": " + what);
    }
    m.input(f);
  }
  for (const auto& p : depgcn::io::write_feature_store(subjects, out)) m.output(p);
  std::vector<std::pair<std::string, std::string>> cfg;
  for (const auto& b : bands) {
    std::ostringstream range;
    range << b.low_hz << "-" << b.high_hz;
    cfg.emplace_back("band." + b.name, range.str());
  }
  cfg.emplace_back("window_s", "2");
  m.config(cfg);
  m.write(out);
  return 0;
}

int cmd_synth(const GlobalOptions& g) {
  Manifest m("synth");
  depgcn::SynthConfig cfg;
  if (!g.config.empty()) {
    depgcn::apply(depgcn::KeyValues::load(g.config), cfg);
    m.input(g.config);
  }
  if (g.seed) cfg.seed = *g.seed;
  cfg.validate();
  const fs::path out = require_out(g);
  const auto ds = depgcn::generate(cfg);
  for (const auto& p : depgcn::io::write_feature_store(ds.subjects, out)) m.output(p);
  const auto truth = out / "truth.json";
  depgcn::report::write_text(truth, depgcn::report::truth_json(ds.truth));
  m.output(truth);
  const auto flips = depgcn::flip_report(ds.truth, cfg.classes());
  std::printf("%d subjects, %d classes, %d flipped labels -> %s\n", cfg.subjects(), cfg.classes(),
              flips.flipped_total, out.string().c_str());
  m.config(depgcn::describe(cfg));
  m.seed(cfg.seed);
  m.write(out);
  return 0;
}

int cmd_train(const GlobalOptions& g, const std::string& feature_dir) {
  Manifest m("train");
  const auto data = load_features(feature_dir, m);
  if (!g.config.empty()) m.input(g.config);
  const auto cfg = load_train_config(g, data);
  const fs::path out = require_out(g);

  const auto result = depgcn::fit(data, cfg);
  std::vector<depgcn::ClassPair> pairs;
  std::vector<std::pair<double, double>> scores;
  for (const auto& s : data) {
    const auto pred = depgcn::predict_subject(result.params, result.model, s);
    if (cfg.regression()) {
      const double score = std::clamp(pred.mean_regression.value_or(0.0), 0.0, 1.0) * depgcn::max_score(cfg.score_scale);
      pairs.emplace_back(s.label, depgcn::level_from_score(static_cast<int>(std::lround(score)), cfg.score_scale));
      scores.emplace_back(static_cast<double>(s.score.value_or(0)), score);
    } else {
      pairs.emplace_back(s.label, pred.predicted_class);
    }
  }
  const int classes = cfg.regression() ? depgcn::class_count(cfg.score_scale) : cfg.model.classes;
  auto metrics = depgcn::evaluate(pairs, classes);
  if (cfg.regression()) metrics.regression = depgcn::mae_rmse(scores);

  const auto model_path = out / "model.dgcn";
  depgcn::save_checkpoint(result.params, result.model, model_path);
  const auto report_path = out / "report.json";
  depgcn::report::write_text(report_path, depgcn::report::fit_json(result, cfg, metrics, {!g.no_history}));
  std::printf("train accuracy %.2f%% over %zu subjects -> %s\n", 100.0 * metrics.accuracy, data.size(),
              report_path.string().c_str());
  m.output(model_path);
  m.output(report_path);
  m.config(depgcn::describe(cfg));
  m.seed(cfg.seed);
  m.write(out);
  return 0;
}

depgcn::LosoResult run_loso(const GlobalOptions& g, const std::vector<depgcn::SubjectDataset>& data,
                            const depgcn::TrainConfig& cfg) {
  depgcn::LosoOptions opts;
  opts.folds_parallel = std::max(1, g.folds_parallel);
  opts.keep_history = !g.no_history;
  return depgcn::loso(data, cfg, opts);
}

int cmd_loso(const GlobalOptions& g, const std::string& feature_dir) {
  Manifest m("loso");
  const auto data = load_features(feature_dir, m);
  if (!g.config.empty()) m.input(g.config);
  const auto cfg = load_train_config(g, data);
  const fs::path out = require_out(g);
  const auto result = run_loso(g, data, cfg);
  const auto report_path = out / "report.json";
  depgcn::report::write_text(report_path, depgcn::report::loso_json(result, cfg, {!g.no_history}));
  std::printf("LOSO accuracy %.2f%%, macro F1 %.2f%% over %zu folds -> %s\n", 100.0 * result.metrics.accuracy,
              100.0 * result.metrics.macro.f1, result.folds.size(), report_path.string().c_str());
  m.output(report_path);
  m.config(depgcn::describe(cfg));
  m.seed(cfg.seed);
  m.write(out);
  return 0;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> values;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (item.find_first_not_of(" \t", used) != std::string::npos) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw depgcn::ConfigError("sweep value '" + item + "' is not a number");
    }
  }
  if (values.empty()) throw depgcn::ConfigError("sweep needs at least one value");
  return values;
}

int cmd_sweep(const GlobalOptions& g, const std::string& feature_dir, const std::string& param,
              const std::string& grid) {
  if (param != "u_rate" && param != "conf_start_fraction") {
    throw depgcn::ConfigError("unknown sweep parameter '" + param + "' (use u_rate or conf_start_fraction)");
  }
  const auto values = parse_grid(grid);
  Manifest m("sweep");
  const auto data = load_features(feature_dir, m);
  if (!g.config.empty()) m.input(g.config);
  const auto base = load_train_config(g, data);
  const fs::path out = require_out(g);

  GlobalOptions quiet = g;
  quiet.no_history = true;
  std::string csv = "param,value,accuracy,macro_f1\n";
  std::string long_csv = "param,value,metric,score\n";
  char line[256];
  for (double v : values) {
    depgcn::TrainConfig cfg = base;
    if (param == "u_rate") cfg.confidence.u_rate = v;
    else cfg.confidence.conf_start_fraction = v;
    cfg.validate();
    const auto r = run_loso(quiet, data, cfg);
    std::snprintf(line, sizeof line, "%s,%.17g,%.17g,%.17g\n", param.c_str(), v, r.metrics.accuracy,
                  r.metrics.macro.f1);
    csv += line;
    const std::pair<const char*, double> rows[] = {{"accuracy", r.metrics.accuracy},
                                                   {"macro_precision", r.metrics.macro.precision},
                                                   {"macro_recall", r.metrics.macro.recall},
                                                   {"macro_f1", r.metrics.macro.f1},
                                                   {"micro_precision", r.metrics.micro_precision}};
    for (const auto& [metric, score] : rows) {
      std::snprintf(line, sizeof line, "%s,%.17g,%s,%.17g\n", param.c_str(), v, metric, score);
      long_csv += line;
    }
    std::printf("%s = %g: accuracy %.2f%%, macro F1 %.2f%%\n", param.c_str(), v, 100.0 * r.metrics.accuracy,
                100.0 * r.metrics.macro.f1);
  }
  const auto csv_path = out / "sweep.csv";
  const auto long_path = out / "sweep_long.csv";
  depgcn::report::write_text(csv_path, csv);
  depgcn::report::write_text(long_path, long_csv);
  m.output(csv_path);
  m.output(long_path);
  auto described = depgcn::describe(base);
  described.emplace_back("sweep.param", param);
  described.emplace_back("sweep.values", grid);
  m.config(described);
  m.seed(base.seed);
  m.write(out);
  return 0;
}

int cmd_report(const GlobalOptions& g, const std::string& report_path) {
  const std::string table = depgcn::report::render_table(depgcn::report::read_text(report_path));
  std::fputs(table.c_str(), stdout);
  if (!g.out.empty()) depgcn::report::write_text(g.out, table);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph-convolutional depression level classifier: features, training and LOSO evaluation"};
  app.set_version_flag("--version", DEPGCN_VERSION);
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--config", g.config, "Run configuration file (key = value); synth reads its generator keys");
  app.add_option("--seed", g.seed, "Seed override");
  app.add_option("--out", g.out, "Output directory (report: optional text file)");
  app.add_option("--folds-parallel", g.folds_parallel, "Leave-one-out folds trained concurrently")
      ->check(CLI::PositiveNumber);
  app.add_flag("--no-confidence", g.no_confidence, "Disable the sample confidence weights");
  app.add_flag("--no-penalty", g.no_penalty, "Disable the minority penalty weights");

  std::string raw_dir, bands, feature_dir, report_path, sweep_param, sweep_values;

  auto* extract = app.add_subcommand("extract", "Slice raw recordings and compute band DE features");
  extract->add_option("raw_dir", raw_dir, "Directory of .eegr recordings")->required();
  extract->add_option("--bands", bands, "Bands as name:low-high,... (default delta..gamma)");

  app.add_subcommand("synth", "Write a synthetic feature store and its truth file");

  auto* train = app.add_subcommand("train", "Fit one model on every subject");
  train->add_option("features", feature_dir, "Feature store directory")->required();
  train->add_flag("--no-history", g.no_history, "Omit per-epoch history from the report");

  auto* loso = app.add_subcommand("loso", "Leave-one-subject-out evaluation");
  loso->add_option("features", feature_dir, "Feature store directory")->required();
  loso->add_flag("--no-history", g.no_history, "Omit per-epoch history from the report");

  auto* sweep = app.add_subcommand("sweep", "One LOSO run per value of a confidence parameter");
  sweep->add_option("features", feature_dir, "Feature store directory")->required();
  sweep->add_option("--param", sweep_param, "u_rate or conf_start_fraction")->required();
  sweep->add_option("--values", sweep_values, "Comma-separated grid")->required();

  auto* report = app.add_subcommand("report", "Render a report as a table");
  report->add_option("report", report_path, "report.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (extract->parsed()) return cmd_extract(g, raw_dir, bands);
    if (app.got_subcommand("synth")) return cmd_synth(g);
    if (train->parsed()) return cmd_train(g, feature_dir);
    if (loso->parsed()) return cmd_loso(g, feature_dir);
    if (sweep->parsed()) return cmd_sweep(g, feature_dir, sweep_param, sweep_values);
    if (report->parsed()) return cmd_report(g, report_path);
  } catch (const depgcn::ConfigError& e) {
    std::cerr << "depgcn: " << e.what() << "\n";
    return 1;
  } catch (const depgcn::InputError& e) {
    std::cerr << "depgcn: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "depgcn: internal error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
