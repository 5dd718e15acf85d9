#pragma once

// Corpus loading, checkpointed training runs and the experiment grid.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "unicorn/config.hpp"
#include "unicorn/dataset.hpp"
#include "unicorn/evaluation.hpp"
#include "unicorn/splits.hpp"
#include "unicorn/training.hpp"

namespace unicorn {

/// Every sample of the configured corpus; relative data paths resolve
/// against `workdir`.
std::vector<SeriesSample> load_corpus_samples(const RunConfig& config, const std::filesystem::path& workdir);

std::vector<WindowKey> sample_keys(const std::vector<SeriesSample>& samples);

/// Samples in the order of `keys`; a key without a sample raises ValidationError.
std::vector<SeriesSample> select_samples(const std::vector<SeriesSample>& samples, const std::vector<WindowKey>& keys);

/// "train", "val" or "test" windows of a split.
const std::vector<WindowKey>& split_part(const SplitAssignment& split, const std::string& name);

struct TrainRunOptions {
  std::vector<int> phases{1, 2, 3};
  /// Continue from out_dir/model.ckpt, skipping completed phases.
  bool resume = false;
  std::filesystem::path out_dir;
};

/// Trains into out_dir: a rolling model.ckpt rewritten after every epoch,
/// phase<N>.ckpt when phase N completes, and metrics.jsonl. Requests that
/// do not start from phase 1 continue from an existing model.ckpt.
ModelBundle train_run(const RunConfig& config, const TrainingData& data, const TrainRunOptions& options);

struct GridSpec {
  std::vector<SplitMethod> methods;
  std::vector<std::size_t> series_lengths;
  std::vector<Ablation> ablations;
};

/// Parses "random_time,by_subject", "1,5,10" and "full,wo_p2".
GridSpec parse_grid(const std::string& methods, const std::string& series_lengths, const std::string& ablations);

struct GridCell {
  SplitMethod method;
  std::size_t series_length;
  Ablation ablation;

  /// "method=<m>/T=<t>/ablation=<a>"
  std::string directory() const;
};

struct CellOutcome {
  GridCell cell;
  std::string status;  // "ok", "skipped" (report present) or "failed"
  std::string error;
};

/// One split + training + test evaluation per cell, all with the base seed.
/// Cells with a report are skipped; a failing cell is recorded in its
/// status.json and the grid continues.
std::vector<CellOutcome> run_experiment_grid(const RunConfig& base, const GridSpec& grid,
                                             const std::filesystem::path& workdir,
                                             const std::filesystem::path& out_dir);

/// Tables over the reports found under a grid directory: one per (T,
/// ablation) with split methods as rows, one per (method, ablation) with T
/// as rows, one per (method, T) with ablations as rows. Tables with a single
/// row are omitted unless nothing else exists.
std::string render_grid_report(const std::filesystem::path& grid_dir);

}  // namespace unicorn
