#pragma once

#include "depgcn/synth.hpp"
#include "depgcn/trainer.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace depgcn {

/// Flat `key = value` text, one pair per line, '#' starts a comment.
/// Duplicate keys keep the last value; line numbers are kept for errors.
struct KeyValues {
  struct Entry {
    std::string value;
    int line = 0;
  };
  std::map<std::string, Entry> entries;
  std::string source;

  static KeyValues parse(const std::string& text, std::string source = "<config>");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { entries[key] = {value, 0}; }
};

/// Applies recognised keys onto `cfg`. Unknown keys and unparsable values are
/// ConfigErrors naming the line. Keys:
///   total_epochs learning_rate momentum seed enable_confidence enable_penalty
///   u_rate conf_start_fraction max_stat max_theo minority_classes penalty_max_norm
///   hidden classes domains grl_lambda head_mode score_scale
/// minority_classes is a comma list of indices or level names (resolved
/// against score_scale), or "none".
void apply(const KeyValues& kv, TrainConfig& cfg);

/// channels bands epochs_per_subject counts_per_class class_sep subject_sd
/// epoch_sd flip_fraction seed
void apply(const KeyValues& kv, SynthConfig& cfg);

/// Every TrainConfig field as key/value text, parseable by apply().
std::vector<std::pair<std::string, std::string>> describe(const TrainConfig& cfg);
std::vector<std::pair<std::string, std::string>> describe(const SynthConfig& cfg);

/// Default run configuration sized for `classes` output levels, with the
/// matching default minority set.
TrainConfig default_train_config(int classes = 5);

}  // namespace depgcn
