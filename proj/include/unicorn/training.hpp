#pragma once

// Losses and the three training phases: snapshot reconstruction, series
// reconstruction and text decoding.

#include <functional>
#include <iosfwd>
#include <vector>

#include "unicorn/checkpoint.hpp"
#include "unicorn/dataset.hpp"
#include "unicorn/models.hpp"

namespace unicorn {

/// Mean absolute error; throws ShapeError on mismatched shapes.
Tensor mae_loss(const Tensor& prediction, const Tensor& target);

/// Mean token cross-entropy over non-pad targets. An all-pad target yields 0
/// and a warning; ids >= |V| raise ValidationError.
Tensor ce_loss(const Tensor& logits, std::span<const std::size_t> targets, std::size_t pad_id = Vocabulary::kPad);

struct PhaseConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
};

struct FreezeFlags {
  bool snapshot_encoder_p2 = true;
  bool snapshot_decoder_p2 = true;
  bool snapshot_encoder_p3 = false;
  bool series_encoder_p3 = false;
};

struct TrainingConfig {
  PhaseConfig phase1{1e-3, 8, 200};
  PhaseConfig phase2{1e-3, 4, 150};
  PhaseConfig phase3{1e-3, 8, 120};
  std::size_t series_length_phase2 = 5;
  FreezeFlags freeze;
  Ablation ablation = Ablation::full;
  std::uint64_t seed = 0;

  /// Small budgets that finish in minutes on one CPU core.
  static TrainingConfig desk(Modality modality);
  /// Learning rates, batch sizes and epochs used at full scale.
  static TrainingConfig full_scale(Modality modality);

  const PhaseConfig& phase(int p) const;
  void validate() const;
};

struct Phase3Example {
  std::vector<Tensor> frames;
  std::vector<std::size_t> target_ids;  // without bos/eos
};

std::vector<Phase3Example> phase3_examples(const std::vector<SeriesSample>& samples, const Vocabulary& vocabulary);

/// Observers and resume state for a phase.
struct PhaseHooks {
  /// In/out run state. When it names the phase being trained with a positive
  /// next_epoch, training continues from there.
  TrainProgress* progress = nullptr;
  std::function<void(const ModelBundle&, const TrainProgress&)> on_epoch_end;
  /// Receives one JSON line per epoch and split.
  std::ostream* metrics_log = nullptr;
};

struct PhaseResult {
  int phase = 0;
  bool skipped = false;
  std::vector<double> train_losses;  // per epoch
  std::vector<double> val_losses;    // per epoch, empty without validation data
};

/// Trains the snapshot encoder and decoder jointly on per-frame MAE.
PhaseResult train_phase1(ModelBundle& bundle, const TrainingConfig& config, const std::vector<Tensor>& snapshots,
                         const PhaseHooks& hooks = {}, const std::vector<Tensor>& val = {});

/// Trains the series encoder to reconstruct every frame of a series through
/// the snapshot decoder.
PhaseResult train_phase2(ModelBundle& bundle, const TrainingConfig& config,
                         const std::vector<std::vector<Tensor>>& series, const PhaseHooks& hooks = {},
                         const std::vector<std::vector<Tensor>>& val = {});

/// Trains projection and text decoder (plus unfrozen encoders) on teacher-forced CE.
PhaseResult train_phase3(ModelBundle& bundle, const TrainingConfig& config, const std::vector<Phase3Example>& examples,
                         const PhaseHooks& hooks = {}, const std::vector<Phase3Example>& val = {});

struct TrainingData {
  std::vector<SeriesSample> train;
  std::vector<SeriesSample> val;
};

/// Runs the requested phases in order, honouring the ablation. With
/// skip_completed set, phases already recorded in the bundle are skipped.
std::vector<PhaseResult> run_phases(ModelBundle& bundle, const TrainingConfig& config, const TrainingData& data,
                                    const std::vector<int>& phases, const PhaseHooks& hooks = {},
                                    bool skip_completed = false);

/// Mean per-frame MAE of decode(encode(f)).
double snapshot_reconstruction_mae(const ModelBundle& bundle, const std::vector<Tensor>& snapshots);
/// Mean per-frame MAE of decode(series_encode(encode(f_1..T))[t]) against f_t.
double series_reconstruction_mae(const ModelBundle& bundle, const std::vector<std::vector<Tensor>>& series);
/// Same frames, reconstructed one snapshot at a time without the series encoder.
double series_snapshot_baseline_mae(const ModelBundle& bundle, const std::vector<std::vector<Tensor>>& series);

}  // namespace unicorn
