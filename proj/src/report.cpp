#include "depgcn/report.hpp"

#include "depgcn/errors.hpp"
#include "depgcn/runconfig.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace depgcn::report {

using Json = nlohmann::ordered_json;

namespace {

double pct(double fraction) { return std::round(fraction * 10000.0) / 100.0; }

Json config_json(const TrainConfig& cfg) {
  Json out = Json::object();
  for (const auto& [k, v] : describe(cfg)) out[k] = v;
  return out;
}

Json prf_json(const PrfScores& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
          {"precision_pct", pct(s.precision)}, {"recall_pct", pct(s.recall)}, {"f1_pct", pct(s.f1)}};
}

Json metrics_block(const MetricsReport& m, const std::vector<std::string>& names) {
  Json out;
  out["accuracy"] = m.accuracy;
  out["accuracy_pct"] = pct(m.accuracy);
  Json per = Json::array();
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    Json row = {{"class", c}, {"name", c < names.size() ? names[c] : "class " + std::to_string(c)}};
    row.update(prf_json(m.per_class[c]));
    per.push_back(std::move(row));
  }
  out["per_class"] = std::move(per);
  out["macro"] = prf_json(m.macro);
  out["micro"] = {{"precision", m.micro_precision}, {"precision_pct", pct(m.micro_precision)}};
  if (m.regression) out["regression"] = {{"mae", m.regression->mae}, {"rmse", m.regression->rmse}};
  return out;
}

Json confusion_json(const ConfusionMatrix& cm) {
  Json rows = Json::array();
  for (int t = 0; t < cm.classes(); ++t) {
    Json row = Json::array();
    for (int p = 0; p < cm.classes(); ++p) row.push_back(cm(t, p));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json history_json(const std::vector<EpochStats>& history) {
  Json epochs = Json::array();
  for (const auto& e : history) {
    Json ledger = Json::array();
    for (const auto& r : e.ledger) {
      ledger.push_back({{"subject", r.subject_id}, {"w_conf", r.w_conf}, {"w_pen", r.w_pen}, {"val_conf", r.val_conf},
                        {"val_pen", r.val_pen}, {"w_all", r.w_all}, {"nel2", r.nel2}, {"true_class", r.true_class},
                        {"predicted_class", r.predicted_class}, {"class_loss", r.class_loss},
                        {"domain_loss", r.domain_loss}});
    }
    epochs.push_back({{"epoch", e.epoch}, {"loss_all", e.loss_all}, {"mean_loss", e.mean_loss},
                      {"train_accuracy", e.train_accuracy}, {"fallback_count", e.fallback_count},
                      {"ledger", std::move(ledger)}});
  }
  return epochs;
}

Json domains_json(const std::map<std::string, int>& domains) {
  Json out = Json::object();
  for (const auto& [id, d] : domains) out[id] = d;
  return out;
}

int report_classes(const TrainConfig& cfg) {
  return cfg.regression() ? class_count(cfg.score_scale) : cfg.model.classes;
}

std::string cell(const Json& j, const char* key) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%9.2f", j.at(key).get<double>());
  return buf;
}

}  // namespace

std::vector<std::string> class_names(int classes, Scale scale) {
  std::vector<std::string> names;
  for (int c = 0; c < classes; ++c) {
    if (classes == class_count(scale)) {
      names.emplace_back(level_name(c, scale));
    } else {
      names.push_back("class " + std::to_string(c));
    }
  }
  return names;
}

std::string loso_json(const LosoResult& result, const TrainConfig& cfg, const ReportOptions& opts) {
  const auto names = class_names(report_classes(cfg), cfg.score_scale);
  Json doc;
  doc["schema"] = kSchema;
  doc["command"] = "loso";
  doc["config"] = config_json(cfg);
  doc["class_names"] = names;

  Json folds = Json::array();
  std::uint64_t fallbacks = 0;
  for (std::size_t i = 0; i < result.folds.size(); ++i) {
    const auto& f = result.folds[i];
    Json row = {{"held_out", f.held_out_subject}, {"true_class", f.true_class},
                {"predicted_class", f.predicted_class},
                {"mean_probs", std::vector<double>(f.mean_probs.data(), f.mean_probs.data() + f.mean_probs.size())},
                {"final_train_loss", f.final_train_loss}};
    if (f.predicted_score) row["predicted_score"] = *f.predicted_score;
    if (f.true_score) row["true_score"] = *f.true_score;
    if (i < result.fits.size()) {
      row["fallback_count"] = result.fits[i].fallback_count;
      row["domains"] = domains_json(result.fits[i].domains);
      fallbacks += result.fits[i].fallback_count;
    }
    folds.push_back(std::move(row));
  }
  doc["folds"] = std::move(folds);
  doc["fallback_activations"] = fallbacks;
  doc["confusion_matrix"] = confusion_json(result.metrics.confusion);
  doc["metrics"] = metrics_block(result.metrics, names);
  if (opts.include_history) {
    Json history = Json::array();
    for (std::size_t i = 0; i < result.fits.size(); ++i) {
      history.push_back({{"held_out", result.folds[i].held_out_subject}, {"epochs", history_json(result.fits[i].history)}});
    }
    doc["history"] = std::move(history);
  }
  return doc.dump(1) + "\n";
}

std::string fit_json(const FitResult& result, const TrainConfig& cfg, const MetricsReport& train_metrics,
                     const ReportOptions& opts) {
  const auto names = class_names(report_classes(cfg), cfg.score_scale);
  Json doc;
  doc["schema"] = kSchema;
  doc["command"] = "train";
  doc["config"] = config_json(cfg);
  doc["class_names"] = names;
  doc["domains"] = domains_json(result.domains);
  doc["fallback_activations"] = result.fallback_count;
  doc["confusion_matrix"] = confusion_json(train_metrics.confusion);
  doc["metrics"] = metrics_block(train_metrics, names);
  if (opts.include_history) doc["history"] = Json::array({{{"held_out", nullptr}, {"epochs", history_json(result.history)}}});
  return doc.dump(1) + "\n";
}

std::string metrics_json(const MetricsReport& m, const std::vector<std::string>& names) {
  return metrics_block(m, names).dump(1);
}

std::string render_table(std::string_view report_json) {
  Json doc;
  try {
    doc = Json::parse(report_json);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("schema")) throw FormatError("report has no schema tag");
  const auto schema = doc["schema"].is_string() ? doc["schema"].get<std::string>() : std::string("?");
  if (schema != kSchema) {
    throw FormatError("unsupported report schema '" + schema + "' (this tool reads " + std::string(kSchema) + ")");
  }
  try {
    const auto& m = doc.at("metrics");
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "%-20s %9s %9s %9s\n", "Depression level", "Pre (%)", "Rec (%)", "F1 (%)");
    out << "Acc (%)       " << cell(m, "accuracy_pct") << "\n";
    out << "Pre_micro (%) " << cell(m.at("micro"), "precision_pct") << "\n\n";
    out << line;
    for (const auto& row : m.at("per_class")) {
      std::snprintf(line, sizeof line, "%-20s ", row.at("name").get<std::string>().c_str());
      out << line << cell(row, "precision_pct") << ' ' << cell(row, "recall_pct") << ' ' << cell(row, "f1_pct")
          << "\n";
    }
    const auto& macro = m.at("macro");
    std::snprintf(line, sizeof line, "%-20s ", "Macro Average");
    out << line << cell(macro, "precision_pct") << ' ' << cell(macro, "recall_pct") << ' ' << cell(macro, "f1_pct")
        << "\n";
    if (m.contains("regression")) {
      const auto& r = m.at("regression");
      std::snprintf(line, sizeof line, "\nMAE  %.2f\nRMSE %.2f\n", r.at("mae").get<double>(), r.at("rmse").get<double>());
      out << line;
    }
    return out.str();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("report does not match ") + std::string(kSchema) + ": " + e.what());
  }
}

std::string truth_json(const SynthTruth& truth) {
  Json doc = Json::object();
  for (const auto& [id, t] : truth.subjects) {
    doc[id] = {{"true_class", t.true_class}, {"stored_label", t.stored_label}, {"flipped", t.flipped}};
  }
  return doc.dump(2) + "\n";
}

SynthTruth parse_truth(std::string_view json_text) {
  SynthTruth truth;
  try {
    const auto doc = Json::parse(json_text);
    for (const auto& [id, v] : doc.items()) {
      truth.subjects[id] = {v.at("true_class").get<int>(), v.at("stored_label").get<int>(), v.at("flipped").get<bool>()};
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("truth file: ") + e.what());
  }
  return truth;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write '" + path.string() + "'");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
}

}  // namespace depgcn::report
