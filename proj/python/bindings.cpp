#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "depgcn/confidence.hpp"
#include "depgcn/errors.hpp"
#include "depgcn/features.hpp"
#include "depgcn/io.hpp"
#include "depgcn/metrics.hpp"
#include "depgcn/penalty.hpp"
#include "depgcn/report.hpp"
#include "depgcn/runconfig.hpp"
#include "depgcn/synth.hpp"
#include "depgcn/trainer.hpp"

#include <algorithm>

namespace py = pybind11;
using namespace depgcn;

namespace {

KeyValues to_kv(const std::map<std::string, std::string>& d, const char* source) {
  KeyValues kv;
  kv.source = source;
  for (const auto& [k, v] : d) kv.set(k, v);
  return kv;
}

// Class count: the `classes` key if given, otherwise what the labels show.
TrainConfig train_config(const std::vector<SubjectDataset>& subjects, const std::map<std::string, std::string>& d) {
  int max_label = 0;
  for (const auto& s : subjects) max_label = std::max(max_label, s.label);
  int classes = std::max(max_label + 1, 2);
  if (const auto it = d.find("classes"); it != d.end()) {
    TrainConfig probe;
    apply(to_kv({{"classes", it->second}}, "config"), probe);
    classes = probe.model.classes;
  }
  TrainConfig cfg = default_train_config(classes);
  apply(to_kv(d, "config"), cfg);
  cfg.validate();
  return cfg;
}

py::dict metrics_dict(const MetricsReport& m) {
  py::list per_class;
  for (const auto& p : m.per_class) {
    py::dict c;
    c["precision"] = p.precision;
    c["recall"] = p.recall;
    c["f1"] = p.f1;
    per_class.append(c);
  }
  py::dict macro;
  macro["precision"] = m.macro.precision;
  macro["recall"] = m.macro.recall;
  macro["f1"] = m.macro.f1;
  py::dict out;
  out["accuracy"] = m.accuracy;
  out["per_class"] = per_class;
  out["macro"] = macro;
  out["micro_precision"] = m.micro_precision;
  const int n = m.confusion.classes();
  Eigen::MatrixXi cm(n, n);
  for (int t = 0; t < n; ++t) {
    for (int p = 0; p < n; ++p) cm(t, p) = static_cast<int>(m.confusion(t, p));
  }
  out["confusion"] = cm;
  return out;
}

}  // namespace

PYBIND11_MODULE(_depgcn, m) {
  m.doc() = "Graph-convolutional depression-level classifier with confidence and minority reweighting.";
  m.attr("__version__") = DEPGCN_VERSION;

  auto input_error = py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  (void)input_error;

  py::class_<SubjectDataset>(m, "Subject")
      .def(py::init([](std::string id, int label, const std::vector<Eigen::MatrixXd>& epochs,
                       std::optional<int> score) {
             SubjectDataset s;
             s.subject_id = std::move(id);
             s.label = label;
             s.score = score;
             std::uint32_t i = 0;
             for (const auto& x : epochs) s.samples.push_back({s.subject_id, i++, x, label});
             validate(s);
             return s;
           }),
           py::arg("subject_id"), py::arg("label"), py::arg("epochs"), py::arg("score") = py::none())
      .def_readonly("subject_id", &SubjectDataset::subject_id)
      .def_readonly("label", &SubjectDataset::label)
      .def_readonly("score", &SubjectDataset::score)
      .def_property_readonly("epochs",
                             [](const SubjectDataset& s) {
                               std::vector<Eigen::MatrixXd> out;
                               for (const auto& smp : s.samples) out.push_back(smp.features);
                               return out;
                             })
      .def("__len__", [](const SubjectDataset& s) { return s.samples.size(); })
      .def("__repr__", [](const SubjectDataset& s) {
        return "<Subject " + s.subject_id + " label=" + std::to_string(s.label) + " epochs=" +
               std::to_string(s.samples.size()) + ">";
      });

  m.def(
      "differential_entropy",
      [](const Eigen::VectorXd& x) { return differential_entropy(std::span<const double>(x.data(), x.size())); },
      py::arg("series"));
  m.def(
      "extract_features",
      [](const std::string& id, const Eigen::MatrixXd& signal, double fs, std::optional<int> score) {
        RawRecording rec;
        rec.subject_id = id;
        rec.signal = signal;
        rec.sample_rate_hz = fs;
        rec.score = score;
        return extract_features(rec, default_bands());
      },
      py::arg("subject_id"), py::arg("signal"), py::arg("sample_rate_hz"), py::arg("score") = py::none(),
      "Slice a channels x samples recording into 2-s epochs and compute band DE features.");
  m.def("level_from_score", [](int score, const std::string& scale) {
    return level_from_score(score, scale == "bdi" ? Scale::BDI : Scale::PHQ9);
  }, py::arg("score"), py::arg("scale") = "phq9");

  m.def("sample_el2", &sample_el2, py::arg("pred"), py::arg("label"));
  m.def("update_nel2", &update_nel2, py::arg("lel2"), py::arg("el2"), py::arg("u_rate"));
  m.def(
      "confidence_value",
      [](double nel2, double max_stat, double max_theo) {
        ConfidenceConfig cfg;
        cfg.max_stat = max_stat;
        cfg.max_theo = max_theo;
        cfg.validate();
        return confidence_value(nel2, cfg);
      },
      py::arg("nel2"), py::arg("max_stat") = ConfidenceConfig{}.max_stat,
      py::arg("max_theo") = ConfidenceConfig{}.max_theo);
  m.def(
      "penalty_value",
      [](double nel2, double max_norm) {
        PenaltyConfig cfg;
        cfg.max_norm = max_norm;
        return penalty_value(nel2, cfg);
      },
      py::arg("nel2"), py::arg("max_norm") = PenaltyConfig{}.max_norm);

  m.def(
      "evaluate",
      [](const std::vector<ClassPair>& pairs, int classes) { return metrics_dict(evaluate(pairs, classes)); },
      py::arg("pairs"), py::arg("classes"), "Metrics of (true, predicted) class pairs.");

  m.def(
      "generate",
      [](const std::map<std::string, std::string>& config) {
        SynthConfig cfg;
        apply(to_kv(config, "config"), cfg);
        cfg.validate();
        auto ds = generate(cfg);
        py::dict truth;
        for (const auto& [id, t] : ds.truth.subjects) {
          py::dict row;
          row["true_class"] = t.true_class;
          row["stored_label"] = t.stored_label;
          row["flipped"] = t.flipped;
          truth[py::str(id)] = row;
        }
        return py::make_tuple(std::move(ds.subjects), truth);
      },
      py::arg("config") = std::map<std::string, std::string>{},
      "Synthetic subjects and their ground truth.");

  m.def("read_feature_store", &io::read_feature_store, py::arg("directory"));
  m.def(
      "write_feature_store",
      [](const std::vector<SubjectDataset>& subjects, const std::filesystem::path& dir) {
        std::vector<std::string> out;
        for (const auto& p : io::write_feature_store(subjects, dir)) out.push_back(p.string());
        return out;
      },
      py::arg("subjects"), py::arg("directory"));

  m.def(
      "loso",
      [](const std::vector<SubjectDataset>& subjects, const std::map<std::string, std::string>& config,
         int folds_parallel, bool history) {
        const TrainConfig cfg = train_config(subjects, config);
        LosoOptions opts;
        opts.folds_parallel = folds_parallel;
        opts.keep_history = history;
        LosoResult r;
        {
          py::gil_scoped_release release;
          r = loso(subjects, cfg, opts);
        }
        report::ReportOptions ro;
        ro.include_history = history;
        return report::loso_json(r, cfg, ro);
      },
      py::arg("subjects"), py::arg("config") = std::map<std::string, std::string>{}, py::arg("folds_parallel") = 1,
      py::arg("history") = false, "Leave-one-subject-out run; returns the JSON report text.");

  m.def("render_table", [](const std::string& json) { return report::render_table(json); }, py::arg("report_json"));
}
