#pragma once

// Run configuration: flat dotted key=value text layered over a preset.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "unicorn/checkpoint.hpp"
#include "unicorn/evaluation.hpp"
#include "unicorn/models.hpp"
#include "unicorn/splits.hpp"
#include "unicorn/training.hpp"

namespace unicorn {

struct DataConfig {
  std::string manifest = "data/manifest.jsonl";
  std::string eeg_features = "data/eeg_features.jsonl";
  std::size_t series_length = 10;
  std::size_t stride = 0;  // 0 means "same as series_length"
  double lag_sec = 0.0;
  bool drop_empty = true;
};

struct SplitConfig {
  SplitMethod method = SplitMethod::random_time;
  SplitRatios ratios;
  bool purge_overlap = false;
};

struct RunConfig {
  std::string preset = "desk";  // desk | full_scale
  Modality modality = Modality::fmri;
  std::uint64_t seed = 0;
  DataConfig data;
  SplitConfig split;
  ModelConfig model;
  TrainingConfig training;
  EvalOptions eval;
  PayloadType checkpoint_dtype = PayloadType::f64;

  /// "desk" pairs desk model dims with desk budgets; "full_scale" pairs the
  /// full-scale dims with the full-scale optimisation settings.
  static RunConfig defaults(const std::string& preset, Modality modality);

  /// `preset` and `modality` lines pick the defaults and are applied first;
  /// every other line overrides one key. Unknown or repeated keys raise
  /// ValidationError.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  /// Every key with its effective value, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
  nlohmann::ordered_json to_json() const;
  static RunConfig from_json(const nlohmann::ordered_json& json);

  /// UNICORN_SEED, when set, replaces the seed.
  void apply_environment();
  void validate() const;

  WindowingOptions windowing() const;
  static const std::vector<std::string>& keys();
};

/// Synthetic corpus specs in the same key=value format; keys are the field
/// names (`dims=16,16,8`). Unknown keys raise ValidationError.
SyntheticSpec parse_synthetic_spec(std::string_view text);
SyntheticEegSpec parse_synthetic_eeg_spec(std::string_view text);

/// Reads a whole text file; a missing file raises ValidationError.
std::string read_text_file(const std::filesystem::path& path);

}  // namespace unicorn
