// Acceptance suite: one PASS/FAIL line per criterion A1..A9.
// Usage: unicorn_acceptance [A1 A2 ...]   (no arguments runs all)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "metric_oracle.hpp"
#include "temp_dir.hpp"
#include "tiny_configs.hpp"
#include "unicorn/checkpoint.hpp"
#include "unicorn/dataset.hpp"
#include "unicorn/evaluation.hpp"
#include "unicorn/log.hpp"
#include "unicorn/metrics.hpp"
#include "unicorn/optim.hpp"
#include "unicorn/splits.hpp"
#include "unicorn/training.hpp"

using namespace unicorn;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool passed = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buffer[512];
  std::snprintf(buffer, sizeof buffer, format, args...);
  return buffer;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<std::vector<double>> parameter_values(const nn::ParameterList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.emplace_back(p.tensor.data().begin(), p.tensor.data().end());
  return out;
}

std::vector<SeriesSample> synthetic_samples(std::size_t stimuli, std::size_t frames, std::size_t T,
                                            std::size_t keep) {
  SyntheticSpec spec;
  spec.n_subjects = 1;
  spec.n_stimuli = stimuli;
  spec.frames_per_stimulus = frames;
  auto corpus = generate_synthetic_corpus(spec, 7);
  WindowingOptions wo;
  wo.series_length = T;
  wo.stride = T;
  auto targets = build_all_windows(corpus.recordings, wo);
  auto samples = samples_from_windows(load_windows(targets, corpus.recordings, corpus.volumes));
  if (samples.size() > keep) samples.resize(keep);
  return samples;
}

// --- A1 ----------------------------------------------------------------------

std::vector<WindowKey> window_grid(std::size_t stride) {
  std::vector<WindowKey> out;
  for (std::size_t i = 1; i <= 4; ++i)
    for (std::size_t j = 1; j <= 3; ++j)
      for (std::size_t k = 0; k + 10 <= 100; k += stride)
        out.push_back({"sub-0" + std::to_string(i), "stim-0" + std::to_string(j), k, 10});
  return out;
}

/// Counts candidates sharing at least one frame with a reference window of
/// the same recording, by comparing explicit frame sets pairwise.
std::size_t brute_force_leakage(const std::vector<WindowKey>& candidates, const std::vector<WindowKey>& reference) {
  std::size_t leaked = 0;
  for (const auto& c : candidates) {
    std::set<std::size_t> frames;
    for (std::size_t f = c.start_index; f < c.start_index + c.series_length; ++f) frames.insert(f);
    bool hit = false;
    for (const auto& r : reference) {
      if (r.subject_id != c.subject_id || r.stimulus_id != c.stimulus_id) continue;
      for (std::size_t f = r.start_index; f < r.start_index + r.series_length && !hit; ++f) hit = frames.count(f) > 0;
      if (hit) break;
    }
    leaked += hit;
  }
  return leaked;
}

Outcome a1() {
  const auto t0 = Clock::now();
  std::size_t runs = 0, failed = 0, violations = 0;
  for (std::size_t stride : {10, 1}) {
    const bool purge = stride == 1;
    const auto windows = window_grid(stride);
    for (SplitMethod method : all_split_methods()) {
      for (std::uint64_t seed = 0; seed < 100; ++seed) {
        ++runs;
        const auto split = generate_split(windows, method, {}, seed, purge);
        const auto cert = verify_split(split);
        violations += cert.violations();
        std::size_t leak = cert.test_leakage + cert.val_leakage;
        std::size_t oracle = brute_force_leakage(split.test, split.train) + brute_force_leakage(split.val, split.train);
        if (!cert.passed() || cert.violations() != 0 || (purge && (leak != 0 || oracle != 0)) || leak != oracle)
          ++failed;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && violations == 0 && secs < 30.0,
          fmt("%zu splits (5 methods x 100 seeds, stride 10 and purged stride 1), %zu failing, %zu violations, "
              "purged leakage 0 by brute force, %.1f s (limit 30 s)",
              runs, failed, violations, secs)};
}

// --- A2 ----------------------------------------------------------------------

TokenList words(const std::string& text) { return tokenize(text); }

Outcome a2() {
  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    auto [cands, refs] = oracle::random_corpus(rng);
    for (std::size_t n = 1; n <= 4; ++n)
      worst = std::max(worst, std::abs(bleu_n(cands, refs, n) - oracle::corpus_bleu(cands, refs, n)));
    for (std::size_t s = 0; s < cands.size(); ++s) {
      if (cands[s].empty() && refs[s].empty()) continue;
      const RougeScore got = rouge1(cands[s], refs[s]);
      const oracle::Rouge want = oracle::rouge1(cands[s], refs[s]);
      worst = std::max({worst, std::abs(got.f - want.f), std::abs(got.p - want.p), std::abs(got.r - want.r)});
    }
  }
  const double h1 = bleu_n({words("a b c d")}, {words("a b x d")}, 1);
  const double h2 = bleu_n({words("the the the")}, {words("the cat")}, 1);
  const RougeScore h3 = rouge1(words("a b"), words("a c d"));
  const double hand = std::max({std::abs(h1 - 0.75), std::abs(h2 - 1.0 / 3.0), std::abs(h3.p - 0.5),
                                std::abs(h3.r - 1.0 / 3.0), std::abs(h3.f - 0.4)});
  return {worst <= 1e-9 && hand <= 1e-15,
          fmt("200 random corpora, max |metric - oracle| = %.3g (limit 1e-9); hand examples 0.75, 1/3, "
              "P/R/F 0.5/0.333/0.4 off by %.3g",
              worst, hand)};
}

// --- A3 ----------------------------------------------------------------------

Outcome a3() {
  SyntheticSpec spec;
  spec.n_subjects = 1;
  spec.n_stimuli = 1;
  spec.frames_per_stimulus = 8;
  auto corpus = generate_synthetic_corpus(spec, 7);
  std::vector<Tensor> snapshots;
  for (const auto& p : corpus.recordings[0].volume_paths) snapshots.push_back(volume_to_tensor(*corpus.volumes.load(p)));

  TrainingConfig cfg = TrainingConfig::desk(Modality::fmri);
  cfg.phase1.epochs = 200;
  auto run = [&](double* initial, double* final_mae, double* secs) {
    ModelBundle bundle(ModelConfig::desk_fmri(), Vocabulary::build({{"a"}}), 1);
    *initial = snapshot_reconstruction_mae(bundle, snapshots);
    const auto t0 = Clock::now();
    auto result = train_phase1(bundle, cfg, snapshots);
    *secs = seconds_since(t0);
    *final_mae = snapshot_reconstruction_mae(bundle, snapshots);
    return std::make_pair(result.train_losses, parameter_values(bundle.parameters()));
  };
  double init_a = 0, final_a = 0, secs_a = 0, init_b = 0, final_b = 0, secs_b = 0;
  const auto a = run(&init_a, &final_a, &secs_a);
  const auto b = run(&init_b, &final_b, &secs_b);
  const double ratio = final_a / init_a;
  const bool identical = a == b && final_a == final_b;
  return {ratio < 0.10 && identical && secs_a < 120.0,
          fmt("MAE %.5f -> %.5f, ratio %.4f (limit 0.10); second seeded run %s; %.1f s per run (limit 120 s)", init_a,
              final_a, ratio, identical ? "bit-identical" : "DIFFERS", secs_a)};
}

// --- A4 ----------------------------------------------------------------------

Outcome a4() {
  auto samples = synthetic_samples(1, 20, 5, 4);
  ModelBundle bundle(ModelConfig::desk_fmri(), build_vocabulary(samples), 1);
  TrainingConfig cfg = TrainingConfig::desk(Modality::fmri);
  // Trained to convergence: long phase 1, then a small-step phase 2.
  cfg.phase1 = {1e-3, 2, 200};
  cfg.phase2 = {1e-4, 2, 1500};
  const auto t0 = Clock::now();
  train_phase1(bundle, cfg, collect_snapshots(samples));
  const auto series = build_phase2_series(samples, 5);
  const double baseline = series_snapshot_baseline_mae(bundle, series);
  train_phase2(bundle, cfg, series);
  const double trained = series_reconstruction_mae(bundle, series);
  return {trained < baseline, fmt("%zu windows of T=5: series MAE %.6f vs phase-1-only per-frame MAE %.6f, %.1f s",
                                  series.size(), trained, baseline, seconds_since(t0))};
}

// --- A5 / A6 -----------------------------------------------------------------

struct OverfitRun {
  std::optional<ModelBundle> bundle;
  std::vector<SeriesSample> samples;
  double accuracy = 0.0;
  double bleu1 = 0.0;
  double seconds = 0.0;
};

OverfitRun overfit(Ablation ablation) {
  OverfitRun run;
  run.samples = synthetic_samples(2, 160, 10, 32);
  run.bundle.emplace(ModelConfig::desk_fmri(), build_vocabulary(run.samples), 1);
  TrainingConfig cfg = TrainingConfig::desk(Modality::fmri);
  cfg.ablation = ablation;
  const auto t0 = Clock::now();
  run_phases(*run.bundle, cfg, {run.samples, {}}, {1, 2, 3});
  run.seconds = seconds_since(t0);
  const EvalReport report = evaluate(*run.bundle, run.samples, {});
  run.accuracy = report.scores.token_accuracy;
  run.bleu1 = report.scores.bleu[0];
  return run;
}

OverfitRun& full_overfit() {
  static OverfitRun run = overfit(Ablation::full);
  return run;
}

Outcome a5() {
  OverfitRun& full = full_overfit();
  const OverfitRun ablated = overfit(Ablation::wo_p1p2);
  const double secs = full.seconds + ablated.seconds;
  return {full.accuracy >= 0.95 && full.bleu1 >= 0.90 && ablated.accuracy < full.accuracy && secs < 600.0,
          fmt("%zu windows: full accuracy %.4f (limit 0.95), BLEU-1 %.4f (limit 0.90); wo_p1p2 accuracy %.4f "
              "(must be lower); %.1f s training (limit 600 s)",
              full.samples.size(), full.accuracy, full.bleu1, ablated.accuracy, secs)};
}

Outcome a6() {
  OverfitRun& full = full_overfit();
  EvalOptions options;
  options.decode.mode = DecodeMode::greedy;
  const double greedy = evaluate(*full.bundle, full.samples, options).scores.bleu[0];
  return {greedy <= full.bleu1, fmt("greedy BLEU-1 %.4f <= teacher-forced BLEU-1 %.4f", greedy, full.bleu1)};
}

// --- A7 ----------------------------------------------------------------------

Outcome a7() {
  double worst = 0.0;
  std::size_t checked = 0;
  std::string worst_name;
  auto check = [&](const ModelConfig& config, const std::vector<std::string>& components, const std::string& tag) {
    ModelBundle bundle(config, testing::tiny_vocabulary(6), 12);
    Rng rng(13);
    std::vector<Tensor> frames;
    for (int t = 0; t < 3; ++t) frames.push_back(testing::random_signal(config.signal_shape(), rng));
    const std::vector<std::size_t> gold{4, 7, 5};
    auto loss = [&] {
      auto logits = decode_text(bundle.text_decoder(), bundle.embed(frames), gold, {}).logits;
      std::vector<std::size_t> targets = gold;
      targets.push_back(Vocabulary::kEos);
      return ops::cross_entropy_sum(logits, targets, Vocabulary::kPad);
    };
    for (const auto& component : components) {
      auto r = testing::check_gradients(loss, bundle.component_parameters(component), 6, 1e-3, 14);
      checked += r.checked;
      if (worst_name.empty() || r.max_relative_error > worst) {
        worst = r.max_relative_error;
        worst_name = tag + " " + component;
      }
    }
  };
  check(testing::tiny_fmri_config(), {"snapshot_encoder", "series_encoder", "projection", "text_decoder"}, "fmri");
  check(testing::tiny_eeg_config(), {"snapshot_encoder", "series_encoder", "projection", "text_decoder"}, "eeg");
  return {worst <= 1e-3, fmt("%zu coordinates over conv and EEG snapshot encoders, series encoder, projection, "
                             "text decoder: max relative error %.3g at %s (limit 1e-3, eps 1e-3)",
                             checked, worst, worst_name.c_str())};
}

// --- A8 ----------------------------------------------------------------------

Outcome a8() {
  std::size_t cases = 0, bad = 0;
  for (const ModelConfig& config : {ModelConfig::desk_fmri(), ModelConfig::desk_eeg()}) {
    for (Ablation ablation : {Ablation::full, Ablation::wo_p2}) {
      ModelBundle bundle(config, testing::tiny_vocabulary(20), 3);
      bundle.set_ablation(ablation);
      Rng rng(5);
      for (std::size_t T : {1, 3, 5, 8, 10, 12, 14, 16}) {
        NoGradGuard no_grad;
        ++cases;
        std::vector<Tensor> frames;
        for (std::size_t t = 0; t < T; ++t) frames.push_back(testing::random_signal(config.signal_shape(), rng));
        const Tensor snapshots = bundle.encode_snapshots(frames);
        const Tensor serialized = bundle.serialize(snapshots);
        const Tensor memory = bundle.embed(frames);
        const Tensor recon = bundle.snapshot_decoder().decode(ops::row(serialized, 0));
        const std::vector<std::size_t> gold{4, 9, 6, 5};
        const auto tf = decode_text(bundle.text_decoder(), memory, gold, {});
        const auto greedy = decode_text(bundle.text_decoder(), memory, std::nullopt, {DecodeMode::greedy, 1, 0});
        const bool ok = snapshots.shape() == Shape{T, config.snapshot_dim} &&
                        serialized.shape() == Shape{T, config.snapshot_dim} &&
                        memory.shape() == Shape{T, config.decoder_dim} && recon.shape() == config.signal_shape() &&
                        tf.logits.shape() == Shape{gold.size() + 1, bundle.vocabulary().size()} &&
                        greedy.predicted.size() <= 4 * T && all_finite(snapshots) && all_finite(serialized) &&
                        all_finite(memory) && all_finite(recon) && all_finite(tf.logits);
        bad += !ok;
      }
    }
  }
  return {bad == 0, fmt("%zu (modality, ablation, T) cases over T in {1,3,5,8,10,12,14,16}: %zu with bad shapes or "
                        "non-finite values",
                        cases, bad)};
}

// --- A9 ----------------------------------------------------------------------

std::string random_word(Rng& rng) {
  std::string w(1 + rng.index(8), 'a');
  for (auto& c : w) c = static_cast<char>('a' + rng.index(26));
  if (rng.index(5) == 0) w += "'s";
  return w;
}

float random_float(Rng& rng) {
  switch (rng.index(8)) {
    case 0: return -0.0f;
    case 1: return std::ldexp(static_cast<float>(rng.uniform()), -140);  // subnormal
    case 2: return static_cast<float>(rng.uniform(-1.0, 1.0) * 3.0e38);
    default: return static_cast<float>(rng.normal() * std::pow(10.0, rng.uniform(-6.0, 6.0)));
  }
}

bool same_bits(const std::vector<float>& a, const std::vector<float>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

bool volume_round_trip(Rng& rng, const std::filesystem::path& dir) {
  FmriVolume v;
  v.dims = {static_cast<std::uint32_t>(1 + rng.index(12)), static_cast<std::uint32_t>(1 + rng.index(12)),
            static_cast<std::uint32_t>(1 + rng.index(12))};
  v.voxels.resize(v.dims.voxel_count());
  for (auto& x : v.voxels) x = random_float(rng);
  const std::string bytes = encode_volume(v);
  const FmriVolume back = decode_volume(bytes);
  write_volume(v, dir / "v.cgv");
  const FmriVolume disk = read_volume(dir / "v.cgv");
  return back.dims == v.dims && same_bits(back.voxels, v.voxels) && encode_volume(back) == bytes &&
         disk.dims == v.dims && same_bits(disk.voxels, v.voxels);
}

bool manifest_round_trip(Rng& rng, const std::filesystem::path& dir) {
  std::vector<RecordingMeta> recs(1 + rng.index(4));
  for (std::size_t i = 0; i < recs.size(); ++i) {
    auto& m = recs[i];
    m.subject_id = "sub-" + random_word(rng);
    m.stimulus_id = "stim-" + std::to_string(i);
    m.tr_seconds = rng.uniform(0.1, 3.0);
    m.n_frames = 1 + rng.index(20);
    for (std::size_t k = 0; k < m.n_frames; ++k)
      m.volume_paths.push_back(m.subject_id + "/" + m.stimulus_id + "/" + std::to_string(k) + ".cgv");
    double t = 0.0;
    const double duration = m.tr_seconds * static_cast<double>(m.n_frames);
    for (std::size_t w = rng.index(15); w > 0; --w) {
      const double onset = t + rng.uniform(0.0, duration / 15.0);
      const double offset = onset + rng.uniform(0.0, duration / 15.0);
      if (offset > duration) break;
      m.transcript.push_back({random_word(rng), onset, offset});
      t = offset;
    }
  }
  const std::string text = encode_manifest(recs);
  const auto back = decode_manifest(text);
  write_manifest(recs, dir / "manifest.jsonl");
  return back == recs && encode_manifest(back) == text && read_manifest(dir / "manifest.jsonl") == recs;
}

bool split_round_trip(Rng& rng, const std::filesystem::path& dir) {
  std::vector<WindowKey> windows;
  const std::size_t subjects = 3 + rng.index(3), stimuli = 3 + rng.index(3), frames = 5 + rng.index(30);
  const std::size_t T = 1 + rng.index(5), stride = 1 + rng.index(T);
  for (std::size_t i = 0; i < subjects; ++i)
    for (std::size_t j = 0; j < stimuli; ++j)
      for (std::size_t k = 0; k + T <= frames; k += stride)
        windows.push_back({"sub-" + std::to_string(i), "stim-" + std::to_string(j), k, T});
  const std::vector<SplitRatios> ratios{{}, {0.6, 0.2, 0.2}, {0.8, 0.1, 0.1}, {0.5, 0.25, 0.25}};
  const auto& methods = all_split_methods();
  const auto split = generate_split(windows, methods[rng.index(methods.size())], ratios[rng.index(ratios.size())],
                                    rng.next_u64(), rng.index(2) == 1);
  const std::string text = encode_split(split);
  const auto back = decode_split(text);
  write_split(split, dir / "split.json");
  const auto disk = read_split(dir / "split.json");
  auto same = [&](const SplitAssignment& s) {
    return s.method == split.method && s.seed == split.seed && s.purge_overlap == split.purge_overlap &&
           s.ratios.as_array() == split.ratios.as_array() && s.train == split.train && s.val == split.val &&
           s.test == split.test && s.purged == split.purged;
  };
  return same(back) && same(disk) && encode_split(back) == text;
}

bool checkpoint_round_trip(Rng& rng, const std::filesystem::path& dir) {
  const ModelConfig config = rng.index(2) ? testing::tiny_fmri_config() : testing::tiny_eeg_config();
  ModelBundle bundle(config, testing::tiny_vocabulary(1 + rng.index(12)), rng.next_u64());
  bundle.set_ablation(static_cast<Ablation>(rng.index(4)));
  for (int phase = 1; phase <= 3; ++phase)
    if (rng.index(2)) bundle.mark_phase_completed(phase);
  TrainProgress progress;
  progress.phase = static_cast<int>(rng.index(4));
  progress.next_epoch = rng.index(100);
  progress.rng_state = std::to_string(rng.next_u64());
  for (std::size_t e = rng.index(5); e > 0; --e)
    progress.history.push_back({static_cast<int>(1 + rng.index(3)), rng.index(50), rng.index(2) ? "train" : "val",
                                rng.uniform(0.0, 10.0), rng.uniform(0.0, 100.0)});
  if (rng.index(2)) {
    const auto components = std::vector<std::string>{"projection", "series_encoder", "text_decoder"};
    Adam adam(bundle.component_parameters(components[rng.index(components.size())]),
              {rng.uniform(1e-5, 1e-2), 0.9, 0.999, 1e-8});
    AdamState state = adam.state();
    state.step = 1 + rng.index(1000);
    for (auto* moments : {&state.first_moment, &state.second_moment})
      for (auto& [name, values] : *moments)
        for (auto& v : values) v = rng.normal();
    progress.optimizer = state;
    progress.optimizer_config = adam.config();
  }
  const nlohmann::ordered_json run_config{{"seed", std::to_string(rng.index(1000))}};
  const PayloadType payload = rng.index(4) == 0 ? PayloadType::f32 : PayloadType::f64;

  // f32 payloads store parameters and moments rounded to single precision.
  auto stored = [&](std::vector<double> values) {
    if (payload == PayloadType::f32)
      for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
    return values;
  };
  const std::string bytes = encode_checkpoint(bundle, progress, run_config, payload);
  const Checkpoint back = decode_checkpoint(bytes);
  if (encode_checkpoint(back.bundle, back.progress, back.run_config, payload) != bytes) return false;
  const auto original = parameter_values(bundle.parameters());
  const auto restored = parameter_values(back.bundle.parameters());
  if (original.size() != restored.size()) return false;
  for (std::size_t i = 0; i < original.size(); ++i)
    if (stored(original[i]) != restored[i]) return false;
  if (back.bundle.ablation() != bundle.ablation() || back.bundle.completed_phases() != bundle.completed_phases())
    return false;
  if (progress.optimizer) {
    if (!back.progress.optimizer || back.progress.optimizer->step != progress.optimizer->step) return false;
    for (auto [mine, theirs] : {std::pair{&progress.optimizer->first_moment, &back.progress.optimizer->first_moment},
                                std::pair{&progress.optimizer->second_moment, &back.progress.optimizer->second_moment}}) {
      if (mine->size() != theirs->size()) return false;
      for (const auto& [name, values] : *mine)
        if (!theirs->count(name) || stored(values) != theirs->at(name)) return false;
    }
  }
  save_checkpoint(dir / "model.ckpt", bundle, progress, run_config, payload);
  const Checkpoint disk = load_checkpoint(dir / "model.ckpt");
  return encode_checkpoint(disk.bundle, disk.progress, disk.run_config, payload) == bytes;
}

Outcome a9() {
  testing::TempDir dir("acceptance_a9");
  Rng rng(99);
  std::map<std::string, std::size_t> failures;
  const std::vector<std::pair<std::string, std::function<bool(Rng&, const std::filesystem::path&)>>> formats{
      {"volume", volume_round_trip},
      {"manifest", manifest_round_trip},
      {"split", split_round_trip},
      {"checkpoint", checkpoint_round_trip}};
  std::size_t total = 0;
  for (const auto& [name, round_trip] : formats) {
    failures[name] = 0;
    for (int i = 0; i < 1000; ++i) {
      ++total;
      bool ok = false;
      try {
        ok = round_trip(rng, dir.path());
      } catch (const std::exception&) {
      }
      failures[name] += !ok;
    }
  }
  std::size_t failed = 0;
  std::string detail;
  for (const auto& [name, n] : failures) {
    failed += n;
    detail += fmt("%s%s %zu/1000", detail.empty() ? "" : ", ", name.c_str(), 1000 - n);
  }
  return {failed == 0, fmt("%zu randomized round trips (memory and disk), bit-exact: ", total) + detail};
}

}  // namespace

int main(int argc, char** argv) {
  log::set_level(log::Level::warn);
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1", a1}, {"A2", a2}, {"A3", a3}, {"A4", a4}, {"A5", a5}, {"A6", a6}, {"A7", a7}, {"A8", a8}, {"A9", a9}};
  std::set<std::string> selected(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto t0 = Clock::now();
    Outcome outcome;
    try {
      outcome = run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    failed += !outcome.passed;
    std::printf("%s %s  %s [%.1f s]\n", id.c_str(), outcome.passed ? "PASS" : "FAIL", outcome.detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
