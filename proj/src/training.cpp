#include "unicorn/training.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "unicorn/errors.hpp"
#include "unicorn/log.hpp"
#include "unicorn/optim.hpp"

namespace unicorn {

Tensor mae_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape())
    throw ShapeError("mae_loss: " + shape_to_string(prediction.shape()) + " vs " + shape_to_string(target.shape()));
  return ops::mae(prediction, target);
}

Tensor ce_loss(const Tensor& logits, std::span<const std::size_t> targets, std::size_t pad_id) {
  const auto counted = static_cast<std::size_t>(
      std::count_if(targets.begin(), targets.end(), [&](std::size_t t) { return t != pad_id; }));
  Tensor total = ops::cross_entropy_sum(logits, targets, pad_id);
  if (counted == 0) {
    log::warn("ce_loss: every target position is padding; loss is 0");
    return total;
  }
  return ops::scale(total, 1.0 / static_cast<double>(counted));
}

TrainingConfig TrainingConfig::desk(Modality modality) {
  TrainingConfig c;
  c.phase1 = {2e-3, 2, 20};
  c.phase2 = {1e-3, 4, 20};
  c.phase3 = {2e-3, 4, 60};
  if (modality == Modality::eeg) c.series_length_phase2 = 10;
  return c;
}

TrainingConfig TrainingConfig::full_scale(Modality modality) {
  TrainingConfig c;
  if (modality == Modality::fmri) {
    c.phase1 = {1e-3, 512, 10};
    c.phase2 = {1e-3, 256, 5};
    c.phase3 = {1e-3, 224, 10};
    c.series_length_phase2 = 5;
  } else {
    c.phase1 = {1e-4, 768, 30};
    c.phase2 = {5e-4, 292, 30};
    c.phase3 = {1e-4, 16, 50};
    c.series_length_phase2 = 10;
  }
  return c;
}

const PhaseConfig& TrainingConfig::phase(int p) const {
  switch (p) {
    case 1: return phase1;
    case 2: return phase2;
    case 3: return phase3;
  }
  throw ValidationError("phase must be 1, 2 or 3, got " + std::to_string(p));
}

void TrainingConfig::validate() const {
  for (int p = 1; p <= 3; ++p) {
    const auto& c = phase(p);
    const std::string prefix = "phase" + std::to_string(p) + ".";
    if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate))
      throw ValidationError(prefix + "lr must be positive");
    if (c.batch_size == 0) throw ValidationError(prefix + "batch_size must be positive");
  }
  if (series_length_phase2 == 0) throw ValidationError("phase2.series_length must be positive");
}

std::vector<Phase3Example> phase3_examples(const std::vector<SeriesSample>& samples, const Vocabulary& vocabulary) {
  std::vector<Phase3Example> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back({s.frames, vocabulary.encode(s.target_tokens)});
  return out;
}

namespace {

/// Disables gradients of the listed parameters for its lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(const nn::ParameterList& frozen) {
    for (const auto& p : frozen) {
      Tensor t = p.tensor;
      saved_.push_back({t, t.requires_grad()});
      t.set_requires_grad(false);
    }
  }
  ~FreezeGuard() {
    for (auto& [t, flag] : saved_) t.set_requires_grad(flag);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  std::vector<std::pair<Tensor, bool>> saved_;
};

bool contains(const nn::ParameterList& list, const TensorNode* node) {
  return std::any_of(list.begin(), list.end(), [&](const nn::NamedParameter& p) { return p.tensor.node() == node; });
}

nn::ParameterList prefixed(const ModelBundle& bundle, const std::vector<std::string>& components) {
  nn::ParameterList out;
  for (const auto& c : components) nn::append_prefixed(out, c, bundle.component_parameters(c));
  return out;
}

/// A batch's mean loss and the weight it carries in the epoch average.
struct BatchLoss {
  Tensor loss;
  double weight = 1.0;
};

using BatchFn = std::function<BatchLoss(std::span<const std::size_t>)>;
using ValFn = std::function<double()>;

void log_epoch(std::ostream* out, const EpochRecord& r) {
  if (!out) return;
  nlohmann::ordered_json line{{"phase", r.phase},
                              {"epoch", r.epoch},
                              {"split", r.split},
                              {"loss", r.loss},
                              {"wall_time", r.wall_seconds}};
  *out << line.dump() << '\n';
  out->flush();
}

PhaseResult run_loop(int phase, ModelBundle& bundle, const TrainingConfig& config, const nn::ParameterList& trainable,
                     std::size_t items, const BatchFn& batch_loss, const ValFn& val_loss, const PhaseHooks& hooks) {
  const PhaseConfig& pc = config.phase(phase);
  PhaseResult result;
  result.phase = phase;

  nn::ParameterList frozen;
  for (const auto& p : bundle.parameters())
    if (!contains(trainable, p.tensor.node())) frozen.push_back(p);
  FreezeGuard guard(frozen);

  const AdamConfig adam_config{pc.learning_rate, 0.9, 0.999, 1e-8};
  Adam adam(trainable, adam_config);
  Rng rng(derive_seed(config.seed, 0x7068617365ULL + static_cast<std::uint64_t>(phase)));

  TrainProgress local;
  TrainProgress& progress = hooks.progress ? *hooks.progress : local;
  std::size_t first_epoch = 0;
  if (progress.phase == phase && progress.next_epoch > 0 && progress.optimizer) {
    adam.load_state(*progress.optimizer);
    rng.restore(progress.rng_state);
    first_epoch = progress.next_epoch;
    log::info("phase " + std::to_string(phase) + ": resuming at epoch " + std::to_string(first_epoch));
  }

  std::vector<std::size_t> order(items);
  for (std::size_t epoch = first_epoch; epoch < pc.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < items; ++i) order[i] = i;
    rng.shuffle(order);
    double weighted = 0.0, weight = 0.0;
    for (std::size_t start = 0; start < items; start += pc.batch_size) {
      const std::size_t count = std::min(pc.batch_size, items - start);
      BatchLoss b = batch_loss(std::span<const std::size_t>(order).subspan(start, count));
      const double value = b.loss.item();
      if (!std::isfinite(value)) {
        throw DivergenceError("phase " + std::to_string(phase) + " epoch " + std::to_string(epoch) + " batch " +
                              std::to_string(start / pc.batch_size) + ": non-finite loss " + std::to_string(value));
      }
      if (b.loss.requires_grad()) {
        b.loss.backward();
        adam.step();
      }
      adam.zero_grad();
      weighted += value * b.weight;
      weight += b.weight;
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const double train_loss = weight > 0.0 ? weighted / weight : 0.0;
    result.train_losses.push_back(train_loss);
    EpochRecord record{phase, epoch, "train", train_loss, seconds};
    progress.history.push_back(record);
    log_epoch(hooks.metrics_log, record);
    if (val_loss) {
      const double v = val_loss();
      result.val_losses.push_back(v);
      EpochRecord val_record{phase, epoch, "val", v, seconds};
      progress.history.push_back(val_record);
      log_epoch(hooks.metrics_log, val_record);
    }

    progress.phase = phase;
    progress.next_epoch = epoch + 1;
    progress.rng_state = rng.state();
    progress.optimizer = adam.state();
    progress.optimizer_config = adam_config;
    if (epoch + 1 == pc.epochs) bundle.mark_phase_completed(phase);
    if (hooks.on_epoch_end) hooks.on_epoch_end(bundle, progress);
  }
  bundle.mark_phase_completed(phase);
  return result;
}

/// Mean over frames of MAE(decode(row_t(embeddings)), frame_t).
Tensor frame_reconstruction_loss(const ModelBundle& bundle, const Tensor& embeddings,
                                 const std::vector<Tensor>& frames) {
  Tensor total;
  for (std::size_t t = 0; t < frames.size(); ++t) {
    Tensor l = mae_loss(bundle.snapshot_decoder().decode(ops::row(embeddings, t)), frames[t]);
    total = total.defined() ? ops::add(total, l) : l;
  }
  return ops::scale(total, 1.0 / static_cast<double>(frames.size()));
}

Tensor series_loss(const ModelBundle& bundle, const std::vector<Tensor>& frames) {
  Tensor snapshots = bundle.encode_snapshots(frames);
  return frame_reconstruction_loss(bundle, bundle.series_encoder().encode(snapshots), frames);
}

Tensor snapshot_loss(const ModelBundle& bundle, const Tensor& frame) {
  return mae_loss(bundle.snapshot_decoder().decode(bundle.snapshot_encoder().encode(frame)), frame);
}

/// Summed CE over the example's targets plus eos, and the token count.
std::pair<Tensor, std::size_t> example_ce(const ModelBundle& bundle, const Phase3Example& ex) {
  std::vector<std::size_t> targets = ex.target_ids;
  targets.push_back(Vocabulary::kEos);
  DecodeResult r = decode_text(bundle.text_decoder(), bundle.embed(ex.frames), ex.target_ids, {});
  return {ops::cross_entropy_sum(r.logits, targets, Vocabulary::kPad), targets.size()};
}

void require_phase(const ModelBundle& bundle, int phase, int needed_by) {
  if (!bundle.completed_phases().count(phase)) {
    throw MissingPrerequisiteError("phase " + std::to_string(needed_by) + " needs a model that completed phase " +
                                   std::to_string(phase) + " (ablation " + to_string(bundle.ablation()) + ")");
  }
}

PhaseResult skipped(int phase) {
  PhaseResult r;
  r.phase = phase;
  r.skipped = true;
  return r;
}

}  // namespace

PhaseResult train_phase1(ModelBundle& bundle, const TrainingConfig& config, const std::vector<Tensor>& snapshots,
                         const PhaseHooks& hooks, const std::vector<Tensor>& val) {
  config.validate();
  bundle.set_ablation(config.ablation);
  if (!runs_phase1(config.ablation)) {
    log::info("phase 1 skipped by ablation " + to_string(config.ablation));
    return skipped(1);
  }
  if (snapshots.empty()) throw ValidationError("phase 1: no snapshots to train on");
  auto trainable = prefixed(bundle, {"snapshot_encoder", "snapshot_decoder"});
  auto batch = [&](std::span<const std::size_t> idx) {
    Tensor total;
    for (std::size_t i : idx) {
      Tensor l = snapshot_loss(bundle, snapshots[i]);
      total = total.defined() ? ops::add(total, l) : l;
    }
    return BatchLoss{ops::scale(total, 1.0 / static_cast<double>(idx.size())), static_cast<double>(idx.size())};
  };
  ValFn val_fn;
  if (!val.empty()) val_fn = [&] { return snapshot_reconstruction_mae(bundle, val); };
  return run_loop(1, bundle, config, trainable, snapshots.size(), batch, val_fn, hooks);
}

PhaseResult train_phase2(ModelBundle& bundle, const TrainingConfig& config,
                         const std::vector<std::vector<Tensor>>& series, const PhaseHooks& hooks,
                         const std::vector<std::vector<Tensor>>& val) {
  config.validate();
  bundle.set_ablation(config.ablation);
  if (!runs_phase2(config.ablation)) {
    log::info("phase 2 skipped by ablation " + to_string(config.ablation));
    return skipped(2);
  }
  if (runs_phase1(config.ablation)) require_phase(bundle, 1, 2);
  if (series.empty()) throw ValidationError("phase 2: no series to train on");
  std::vector<std::string> components{"series_encoder"};
  if (!config.freeze.snapshot_encoder_p2) components.push_back("snapshot_encoder");
  if (!config.freeze.snapshot_decoder_p2) components.push_back("snapshot_decoder");
  auto trainable = prefixed(bundle, components);
  auto batch = [&](std::span<const std::size_t> idx) {
    Tensor total;
    for (std::size_t i : idx) {
      Tensor l = series_loss(bundle, series[i]);
      total = total.defined() ? ops::add(total, l) : l;
    }
    return BatchLoss{ops::scale(total, 1.0 / static_cast<double>(idx.size())), static_cast<double>(idx.size())};
  };
  ValFn val_fn;
  if (!val.empty()) val_fn = [&] { return series_reconstruction_mae(bundle, val); };
  return run_loop(2, bundle, config, trainable, series.size(), batch, val_fn, hooks);
}

PhaseResult train_phase3(ModelBundle& bundle, const TrainingConfig& config, const std::vector<Phase3Example>& examples,
                         const PhaseHooks& hooks, const std::vector<Phase3Example>& val) {
  config.validate();
  bundle.set_ablation(config.ablation);
  if (bundle.vocabulary().size() <= Vocabulary::kSpecialCount) throw ValidationError("phase 3: empty vocabulary");
  if (runs_phase1(config.ablation)) require_phase(bundle, 1, 3);
  if (runs_phase2(config.ablation)) require_phase(bundle, 2, 3);
  if (examples.empty()) throw ValidationError("phase 3: no examples to train on");

  std::vector<std::string> components{"projection", "text_decoder"};
  if (!config.freeze.snapshot_encoder_p3) components.push_back("snapshot_encoder");
  if (!config.freeze.series_encoder_p3 && uses_series_encoder(config.ablation)) components.push_back("series_encoder");
  auto trainable = prefixed(bundle, components);

  auto batch = [&](std::span<const std::size_t> idx) {
    Tensor total;
    std::size_t tokens = 0;
    for (std::size_t i : idx) {
      auto [l, n] = example_ce(bundle, examples[i]);
      total = total.defined() ? ops::add(total, l) : l;
      tokens += n;
    }
    return BatchLoss{ops::scale(total, 1.0 / static_cast<double>(tokens)), static_cast<double>(tokens)};
  };
  ValFn val_fn;
  if (!val.empty()) {
    val_fn = [&] {
      NoGradGuard no_grad;
      double sum = 0.0;
      std::size_t tokens = 0;
      for (const auto& ex : val) {
        auto [l, n] = example_ce(bundle, ex);
        sum += l.item();
        tokens += n;
      }
      return sum / static_cast<double>(tokens);
    };
  }
  return run_loop(3, bundle, config, trainable, examples.size(), batch, val_fn, hooks);
}

std::vector<PhaseResult> run_phases(ModelBundle& bundle, const TrainingConfig& config, const TrainingData& data,
                                    const std::vector<int>& phases, const PhaseHooks& hooks, bool skip_completed) {
  std::vector<PhaseResult> results;
  for (int phase : phases) {
    if (skip_completed && bundle.completed_phases().count(phase)) {
      log::info("phase " + std::to_string(phase) + " already completed; skipping");
      continue;
    }
    switch (phase) {
      case 1:
        results.push_back(train_phase1(bundle, config, collect_snapshots(data.train), hooks,
                                       data.val.empty() ? std::vector<Tensor>{} : collect_snapshots(data.val)));
        break;
      case 2: {
        if (!runs_phase2(config.ablation)) {
          results.push_back(train_phase2(bundle, config, {}, hooks));
          break;
        }
        auto series = build_phase2_series(data.train, config.series_length_phase2);
        auto val = data.val.empty() ? std::vector<std::vector<Tensor>>{}
                                    : build_phase2_series(data.val, config.series_length_phase2);
        results.push_back(train_phase2(bundle, config, series, hooks, val));
        break;
      }
      case 3:
        results.push_back(train_phase3(bundle, config, phase3_examples(data.train, bundle.vocabulary()), hooks,
                                       phase3_examples(data.val, bundle.vocabulary())));
        break;
      default:
        throw ValidationError("unknown phase " + std::to_string(phase));
    }
  }
  return results;
}

double snapshot_reconstruction_mae(const ModelBundle& bundle, const std::vector<Tensor>& snapshots) {
  if (snapshots.empty()) throw ValidationError("no snapshots");
  NoGradGuard no_grad;
  double sum = 0.0;
  for (const auto& s : snapshots) sum += snapshot_loss(bundle, s).item();
  return sum / static_cast<double>(snapshots.size());
}

double series_reconstruction_mae(const ModelBundle& bundle, const std::vector<std::vector<Tensor>>& series) {
  if (series.empty()) throw ValidationError("no series");
  NoGradGuard no_grad;
  double sum = 0.0;
  for (const auto& s : series) sum += series_loss(bundle, s).item();
  return sum / static_cast<double>(series.size());
}

double series_snapshot_baseline_mae(const ModelBundle& bundle, const std::vector<std::vector<Tensor>>& series) {
  if (series.empty()) throw ValidationError("no series");
  NoGradGuard no_grad;
  double sum = 0.0;
  for (const auto& s : series) sum += frame_reconstruction_loss(bundle, bundle.encode_snapshots(s), s).item();
  return sum / static_cast<double>(series.size());
}

}  // namespace unicorn
