#pragma once

// Self-describing parameter checkpoints.
//
// Layout: "UNICKPT1", little-endian uint64 header length, UTF-8 JSON header,
// tensor payload, little-endian uint32 CRC-32 of header and payload. The
// header echoes the model and run configuration, the vocabulary, phase
// provenance, training progress and one {name, shape, dtype, offset} entry per
// stored tensor (model parameters and optimizer moments).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "unicorn/models.hpp"
#include "unicorn/optim.hpp"

namespace unicorn {

struct EpochRecord {
  int phase = 0;
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double wall_seconds = 0.0;
};

/// Where a training run stands, enough to continue it bit-exactly.
struct TrainProgress {
  int phase = 0;                // phase the optimizer state belongs to; 0 when none
  std::size_t next_epoch = 0;   // first epoch still to run in that phase
  std::string rng_state;        // data-order generator of that phase
  std::optional<AdamState> optimizer;
  std::optional<AdamConfig> optimizer_config;
  std::vector<EpochRecord> history;
};

enum class PayloadType { f64, f32 };

std::string to_string(PayloadType t);
PayloadType parse_payload_type(const std::string& text);

nlohmann::ordered_json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::ordered_json& json);

struct Checkpoint {
  ModelBundle bundle;
  TrainProgress progress;
  nlohmann::ordered_json run_config;  // echo of the run configuration, may be null
};

std::string encode_checkpoint(const ModelBundle& bundle, const TrainProgress& progress,
                              const nlohmann::ordered_json& run_config, PayloadType payload = PayloadType::f64);
/// Throws FormatError on bad magic/header, CorruptionError on checksum or size mismatch.
Checkpoint decode_checkpoint(std::string_view bytes);

/// Writes through a temporary file and renames, so readers never see a
/// partial checkpoint.
void save_checkpoint(const std::filesystem::path& path, const ModelBundle& bundle, const TrainProgress& progress,
                     const nlohmann::ordered_json& run_config, PayloadType payload = PayloadType::f64);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace unicorn
