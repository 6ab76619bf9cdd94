#include "depgcn/runconfig.hpp"

#include "depgcn/errors.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

namespace depgcn {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string where(const KeyValues& kv, const KeyValues::Entry& e) {
  return e.line > 0 ? kv.source + ":" + std::to_string(e.line) : kv.source;
}

std::string lower(std::string s) {
  std::ranges::transform(s, s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

template <class T>
T parse_number(const KeyValues& kv, const std::string& key, const KeyValues::Entry& e) {
  T out{};
  const auto* first = e.value.data();
  const auto* last = first + e.value.size();
  const auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError(where(kv, e) + ": cannot parse '" + e.value + "' for key '" + key + "'");
  }
  return out;
}

bool parse_bool(const KeyValues& kv, const std::string& key, const KeyValues::Entry& e) {
  const auto v = lower(e.value);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(where(kv, e) + ": expected a boolean for key '" + key + "', got '" + e.value + "'");
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt(double v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <class T>
std::string join(const T& values) {
  std::string out;
  for (const auto& v : values) {
    if (!out.empty()) out += ',';
    out += std::to_string(v);
  }
  return out;
}

}  // namespace

KeyValues KeyValues::parse(const std::string& text, std::string source) {
  KeyValues kv;
  kv.source = std::move(source);
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(kv.source + ":" + std::to_string(number) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(body).substr(0, eq));
    if (key.empty()) throw ConfigError(kv.source + ":" + std::to_string(number) + ": empty key");
    kv.entries[key] = {trim(std::string_view(body).substr(eq + 1)), number};
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

TrainConfig default_train_config(int classes) {
  TrainConfig cfg;
  cfg.model.classes = classes;
  cfg.penalty.minority_classes = default_minority_classes(classes);
  cfg.penalty.max_norm = cfg.confidence.max_stat;
  cfg.score_scale = classes == 4 ? Scale::BDI : Scale::PHQ9;
  return cfg;
}

void apply(const KeyValues& kv, TrainConfig& cfg) {
  bool max_norm_given = false;
  const KeyValues::Entry* minority = nullptr;
  for (const auto& [key, e] : kv.entries) {
    if (key == "total_epochs") cfg.total_epochs = parse_number<int>(kv, key, e);
    else if (key == "learning_rate") cfg.learning_rate = parse_number<double>(kv, key, e);
    else if (key == "momentum") cfg.momentum = parse_number<double>(kv, key, e);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(kv, key, e);
    else if (key == "enable_confidence") cfg.enable_confidence = parse_bool(kv, key, e);
    else if (key == "enable_penalty") cfg.enable_penalty = parse_bool(kv, key, e);
    else if (key == "u_rate") cfg.confidence.u_rate = parse_number<double>(kv, key, e);
    else if (key == "conf_start_fraction") cfg.confidence.conf_start_fraction = parse_number<double>(kv, key, e);
    else if (key == "max_stat") cfg.confidence.max_stat = parse_number<double>(kv, key, e);
    else if (key == "max_theo") cfg.confidence.max_theo = parse_number<double>(kv, key, e);
    else if (key == "penalty_max_norm") {
      cfg.penalty.max_norm = parse_number<double>(kv, key, e);
      max_norm_given = true;
    } else if (key == "minority_classes") minority = &e;
    else if (key == "hidden") cfg.model.hidden = parse_number<int>(kv, key, e);
    else if (key == "classes") cfg.model.classes = parse_number<int>(kv, key, e);
    else if (key == "domains") cfg.model.domains = parse_number<int>(kv, key, e);
    else if (key == "grl_lambda") cfg.model.grl_lambda = parse_number<double>(kv, key, e);
    else if (key == "head_mode") {
      const auto v = lower(e.value);
      if (v == "classification") cfg.model.head_mode = HeadMode::Classification;
      else if (v == "regression") cfg.model.head_mode = HeadMode::Regression;
      else throw ConfigError(where(kv, e) + ": head_mode must be classification or regression");
    } else if (key == "score_scale") {
      const auto v = lower(e.value);
      if (v == "phq9") cfg.score_scale = Scale::PHQ9;
      else if (v == "bdi") cfg.score_scale = Scale::BDI;
      else throw ConfigError(where(kv, e) + ": score_scale must be PHQ9 or BDI");
    } else {
      throw ConfigError(where(kv, e) + ": unknown key '" + key + "'");
    }
  }
  if (!max_norm_given && kv.entries.contains("max_stat")) cfg.penalty.max_norm = cfg.confidence.max_stat;
  if (minority) {
    cfg.penalty.minority_classes.clear();
    if (lower(minority->value) != "none") {
      for (const auto& item : split_list(minority->value)) {
        int idx = 0;
        const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), idx);
        if (ec == std::errc() && ptr == item.data() + item.size()) {
          cfg.penalty.minority_classes.insert(idx);
        } else if (auto named = level_from_name(item, cfg.score_scale)) {
          cfg.penalty.minority_classes.insert(*named);
        } else {
          throw ConfigError(where(kv, *minority) + ": unknown minority class '" + item + "'");
        }
      }
    }
  }
}

void apply(const KeyValues& kv, SynthConfig& cfg) {
  for (const auto& [key, e] : kv.entries) {
    if (key == "channels") cfg.channels = parse_number<int>(kv, key, e);
    else if (key == "bands") cfg.bands = parse_number<int>(kv, key, e);
    else if (key == "epochs_per_subject") cfg.epochs_per_subject = parse_number<int>(kv, key, e);
    else if (key == "class_sep") cfg.class_sep = parse_number<double>(kv, key, e);
    else if (key == "subject_sd") cfg.subject_sd = parse_number<double>(kv, key, e);
    else if (key == "epoch_sd") cfg.epoch_sd = parse_number<double>(kv, key, e);
    else if (key == "flip_fraction") cfg.flip_fraction = parse_number<double>(kv, key, e);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(kv, key, e);
    else if (key == "counts_per_class") {
      cfg.counts_per_class.clear();
      for (const auto& item : split_list(e.value)) {
        KeyValues::Entry sub{item, e.line};
        cfg.counts_per_class.push_back(parse_number<int>(kv, key, sub));
      }
    } else {
      throw ConfigError(where(kv, e) + ": unknown key '" + key + "'");
    }
  }
}

std::vector<std::pair<std::string, std::string>> describe(const TrainConfig& cfg) {
  const std::string minority = cfg.penalty.minority_classes.empty() ? "none" : join(cfg.penalty.minority_classes);
  return {
      {"total_epochs", std::to_string(cfg.total_epochs)},
      {"learning_rate", fmt(cfg.learning_rate)},
      {"momentum", fmt(cfg.momentum)},
      {"seed", std::to_string(cfg.seed)},
      {"enable_confidence", cfg.enable_confidence ? "true" : "false"},
      {"enable_penalty", cfg.enable_penalty ? "true" : "false"},
      {"u_rate", fmt(cfg.confidence.u_rate)},
      {"conf_start_fraction", fmt(cfg.confidence.conf_start_fraction)},
      {"max_stat", fmt(cfg.confidence.max_stat)},
      {"max_theo", fmt(cfg.confidence.max_theo)},
      {"minority_classes", minority},
      {"penalty_max_norm", fmt(cfg.penalty.max_norm)},
      {"hidden", std::to_string(cfg.model.hidden)},
      {"classes", std::to_string(cfg.model.classes)},
      {"domains", std::to_string(cfg.model.domains)},
      {"grl_lambda", fmt(cfg.model.grl_lambda)},
      {"head_mode", cfg.model.head_mode == HeadMode::Regression ? "regression" : "classification"},
      {"score_scale", std::string(scale_name(cfg.score_scale))},
  };
}

std::vector<std::pair<std::string, std::string>> describe(const SynthConfig& cfg) {
  return {
      {"channels", std::to_string(cfg.channels)},
      {"bands", std::to_string(cfg.bands)},
      {"epochs_per_subject", std::to_string(cfg.epochs_per_subject)},
      {"counts_per_class", join(cfg.counts_per_class)},
      {"class_sep", fmt(cfg.class_sep)},
      {"subject_sd", fmt(cfg.subject_sd)},
      {"epoch_sd", fmt(cfg.epoch_sd)},
      {"flip_fraction", fmt(cfg.flip_fraction)},
      {"seed", std::to_string(cfg.seed)},
  };
}

}  // namespace depgcn
