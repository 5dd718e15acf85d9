#pragma once

// Decoding-based evaluation and report rendering.

#include <array>
#include <string>
#include <vector>

#include <json.hpp>

#include "unicorn/dataset.hpp"
#include "unicorn/metrics.hpp"
#include "unicorn/models.hpp"

namespace unicorn {

struct EvalRecord {
  std::string id;
  TokenList gold;
  TokenList predicted;
  std::size_t correct_tokens = 0;
  std::size_t total_tokens = 0;
};

/// Corpus scores as fractions in [0, 1].
struct EvalScores {
  std::array<double, 4> bleu{};  // BLEU-1..4
  RougeScore rouge;
  double token_accuracy = 0.0;
};

struct EvalReport {
  DecodeOptions decode;
  EvalScores scores;
  std::vector<EvalRecord> records;
  nlohmann::ordered_json config;      // run configuration echo
  nlohmann::ordered_json provenance;  // ablation and completed phases

  std::string to_json() const;
  static EvalReport from_json(std::string_view text);
  /// One-row plain-text table with percentages.
  std::string render() const;
};

struct EvalOptions {
  DecodeOptions decode;
  BleuOptions bleu;
};

/// Throws MissingPrerequisiteError when the bundle has not completed phase 3.
EvalReport evaluate(const ModelBundle& bundle, const std::vector<SeriesSample>& samples, const EvalOptions& options);

/// Token ids of one decode, cut at the first eos.
std::vector<std::size_t> truncate_at_eos(const std::vector<std::size_t>& ids);

/// A labelled row of a results table.
struct TableRow {
  std::string label;
  EvalScores scores;
};

/// Columns BLEU-1..4 and ROUGE-1 F/P/R, as percentages with two decimals.
std::string render_table(const std::string& title, const std::string& row_header, const std::vector<TableRow>& rows);

}  // namespace unicorn
