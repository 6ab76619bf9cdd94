#pragma once

#include "depgcn/synth.hpp"
#include "depgcn/trainer.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace depgcn::report {

inline constexpr std::string_view kSchema = "depgcn.report/1";

std::vector<std::string> class_names(int classes, Scale scale);

struct ReportOptions {
  bool include_history = true;  // per-epoch stats and the weight ledger
};

/// JSON report of a leave-one-subject-out run. The document contains no
/// timing fields, so equal inputs give byte-identical text.
std::string loso_json(const LosoResult& result, const TrainConfig& cfg, const ReportOptions& opts = {});

/// JSON report of a single fit; `metrics` is evaluated on the training subjects.
std::string fit_json(const FitResult& result, const TrainConfig& cfg, const MetricsReport& train_metrics,
                     const ReportOptions& opts = {});

/// Metrics block alone (accuracy, per_class, macro, micro, regression).
std::string metrics_json(const MetricsReport& m, const std::vector<std::string>& names);

/// Table rendering: accuracy, per-class P/R/F1, macro and micro rows as
/// 2-decimal percentages; the regression block only when present. Throws
/// FormatError when the schema tag is missing or differs.
std::string render_table(std::string_view report_json);

/// subject id -> {true_class, stored_label, flipped}
std::string truth_json(const SynthTruth& truth);
SynthTruth parse_truth(std::string_view json_text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

}  // namespace depgcn::report
