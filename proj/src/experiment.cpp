#include "unicorn/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>
#include <tuple>

#include "unicorn/errors.hpp"
#include "unicorn/log.hpp"

namespace unicorn {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

fs::path resolve(const fs::path& workdir, const std::string& path) {
  const fs::path p(path);
  return p.is_absolute() ? p : workdir / p;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << text;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    const auto first = item.find_first_not_of(' ');
    const auto last = item.find_last_not_of(' ');
    if (first != std::string::npos) out.push_back(item.substr(first, last - first + 1));
  }
  return out;
}

}  // namespace

std::vector<SeriesSample> load_corpus_samples(const RunConfig& config, const fs::path& workdir) {
  if (config.modality == Modality::eeg)
    return samples_from_eeg(read_eeg_features(resolve(workdir, config.data.eeg_features)));

  const fs::path manifest = resolve(workdir, config.data.manifest);
  const auto recordings = read_manifest(manifest);
  const auto targets = build_all_windows(recordings, config.windowing());
  DiskVolumeSource source(manifest.parent_path());
  return samples_from_windows(load_windows(targets, recordings, source));
}

std::vector<WindowKey> sample_keys(const std::vector<SeriesSample>& samples) {
  std::vector<WindowKey> keys;
  keys.reserve(samples.size());
  for (const auto& s : samples) keys.push_back(s.key);
  return keys;
}

std::vector<SeriesSample> select_samples(const std::vector<SeriesSample>& samples, const std::vector<WindowKey>& keys) {
  std::map<WindowKey, const SeriesSample*> index;
  for (const auto& s : samples) index.emplace(s.key, &s);
  std::vector<SeriesSample> out;
  out.reserve(keys.size());
  for (const auto& k : keys) {
    auto it = index.find(k);
    if (it == index.end()) throw ValidationError("split window " + k.to_string() + " is not in the corpus");
    out.push_back(*it->second);
  }
  return out;
}

const std::vector<WindowKey>& split_part(const SplitAssignment& split, const std::string& name) {
  if (name == "train") return split.train;
  if (name == "val") return split.val;
  if (name == "test") return split.test;
  throw ValidationError("unknown split part '" + name + "' (expected train, val or test)");
}

ModelBundle train_run(const RunConfig& config, const TrainingData& data, const TrainRunOptions& options) {
  config.validate();
  if (options.phases.empty()) throw ValidationError("no phases requested");
  if (data.train.empty()) throw ValidationError("training set is empty");
  fs::create_directories(options.out_dir);
  const fs::path rolling = options.out_dir / "model.ckpt";

  const bool from_scratch = options.phases.front() == 1 && !options.resume;
  std::optional<ModelBundle> bundle;
  TrainProgress progress;
  if (!from_scratch && fs::exists(rolling)) {
    Checkpoint ckpt = load_checkpoint(rolling);
    if (ckpt.bundle.config().modality != config.modality)
      throw ValidationError("checkpoint modality differs from the run configuration");
    bundle.emplace(std::move(ckpt.bundle));
    progress = std::move(ckpt.progress);
    log::info("continuing from " + rolling.string());
  } else {
    if (options.resume) log::warn("nothing to resume in " + options.out_dir.string() + "; starting fresh");
    bundle.emplace(config.model, build_vocabulary(data.train), config.seed);
  }

  const fs::path metrics_path = options.out_dir / "metrics.jsonl";
  std::ofstream metrics(metrics_path, from_scratch ? std::ios::trunc : std::ios::app);
  if (!metrics) throw ValidationError("cannot open " + metrics_path.string());

  const json echo = config.to_json();
  PhaseHooks hooks;
  hooks.progress = &progress;
  hooks.metrics_log = &metrics;
  hooks.on_epoch_end = [&](const ModelBundle& b, const TrainProgress& p) {
    save_checkpoint(rolling, b, p, echo, config.checkpoint_dtype);
    if (p.next_epoch == config.training.phase(p.phase).epochs)
      fs::copy_file(rolling, options.out_dir / ("phase" + std::to_string(p.phase) + ".ckpt"),
                    fs::copy_options::overwrite_existing);
  };

  run_phases(*bundle, config.training, data, options.phases, hooks, !from_scratch);
  // Phases without epochs (skipped by the ablation) still change the bundle.
  save_checkpoint(rolling, *bundle, progress, echo, config.checkpoint_dtype);
  return std::move(*bundle);
}

GridSpec parse_grid(const std::string& methods, const std::string& series_lengths, const std::string& ablations) {
  GridSpec g;
  for (const auto& m : split_list(methods)) g.methods.push_back(parse_split_method(m));
  for (const auto& t : split_list(series_lengths)) {
    std::size_t pos = 0;
    unsigned long value = 0;
    try {
      value = std::stoul(t, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos != t.size() || value == 0) throw ValidationError("series length '" + t + "' is not a positive integer");
    g.series_lengths.push_back(value);
  }
  for (const auto& a : split_list(ablations)) g.ablations.push_back(parse_ablation(a));
  if (g.methods.empty() || g.series_lengths.empty() || g.ablations.empty())
    throw ValidationError("grid needs at least one method, series length and ablation");
  return g;
}

std::string GridCell::directory() const {
  return "method=" + to_string(method) + "/T=" + std::to_string(series_length) + "/ablation=" + to_string(ablation);
}

std::vector<CellOutcome> run_experiment_grid(const RunConfig& base, const GridSpec& grid, const fs::path& workdir,
                                             const fs::path& out_dir) {
  if (grid.methods.empty() || grid.series_lengths.empty() || grid.ablations.empty())
    throw ValidationError("experiment grid is empty");
  std::vector<CellOutcome> outcomes;
  std::map<std::size_t, std::vector<SeriesSample>> corpus_by_length;

  for (std::size_t T : grid.series_lengths) {
    for (SplitMethod method : grid.methods) {
      for (Ablation ablation : grid.ablations) {
        GridCell cell{method, T, ablation};
        const fs::path dir = out_dir / cell.directory();
        if (fs::exists(dir / "report.json")) {
          outcomes.push_back({cell, "skipped", ""});
          continue;
        }
        fs::create_directories(dir);
        log::info("grid cell " + cell.directory());
        try {
          RunConfig config = base;
          config.split.method = method;
          config.data.series_length = T;
          if (config.data.stride == 0 || config.data.stride == base.data.series_length) config.data.stride = T;
          config.training.ablation = ablation;
          config.validate();

          auto it = corpus_by_length.find(T);
          if (it == corpus_by_length.end())
            it = corpus_by_length.emplace(T, load_corpus_samples(config, workdir)).first;
          const auto& samples = it->second;

          const fs::path split_path = dir / "split.json";
          SplitAssignment split = fs::exists(split_path)
                                      ? read_split(split_path)
                                      : generate_split(sample_keys(samples), method, config.split.ratios, config.seed,
                                                       config.split.purge_overlap);
          const SplitCertificate certificate = verify_split(split);
          write_split(split, split_path);
          write_text(dir / "certificate.txt", certificate.render());
          if (!certificate.passed()) throw ValidationError("split certificate failed");

          TrainingData data{select_samples(samples, split.train), select_samples(samples, split.val)};
          TrainRunOptions run;
          run.phases = {1, 2, 3};
          run.resume = true;
          run.out_dir = dir;
          ModelBundle bundle = train_run(config, data, run);

          auto test = select_samples(samples, split.test);
          EvalReport report = evaluate(bundle, test, config.eval);
          report.config = config.to_json();
          report.provenance["checkpoint"] = (dir / "model.ckpt").string();
          report.provenance["split"] = (dir / "split.json").string();
          write_text(dir / "report.txt", report.render());
          write_text(dir / "report.json", report.to_json());
          write_text(dir / "status.json", json{{"status", "ok"}}.dump(1) + "\n");
          outcomes.push_back({cell, "ok", ""});
        } catch (const std::exception& e) {
          log::warn("grid cell " + cell.directory() + " failed: " + e.what());
          write_text(dir / "status.json", json{{"status", "failed"}, {"error", e.what()}}.dump(1) + "\n");
          outcomes.push_back({cell, "failed", e.what()});
        }
      }
    }
  }
  return outcomes;
}

std::string render_grid_report(const fs::path& grid_dir) {
  struct Entry {
    SplitMethod method;
    std::size_t T;
    Ablation ablation;
    EvalScores scores;
  };
  std::vector<Entry> entries;
  std::string mode;
  if (!fs::is_directory(grid_dir)) throw ValidationError("grid directory " + grid_dir.string() + " does not exist");
  for (const auto& item : fs::recursive_directory_iterator(grid_dir)) {
    if (item.path().filename() != "report.json") continue;
    const EvalReport report = EvalReport::from_json(read_text_file(item.path()));
    const RunConfig config = RunConfig::from_json(report.config);
    entries.push_back({config.split.method, config.data.series_length, config.training.ablation, report.scores});
    mode = to_string(report.decode.mode);
  }
  if (entries.empty()) throw ValidationError("no reports under " + grid_dir.string());

  const auto& method_order = all_split_methods();
  auto method_rank = [&](SplitMethod m) { return std::find(method_order.begin(), method_order.end(), m) - method_order.begin(); };
  std::sort(entries.begin(), entries.end(), [&](const Entry& a, const Entry& b) {
    return std::tuple(method_rank(a.method), a.T, a.ablation) < std::tuple(method_rank(b.method), b.T, b.ablation);
  });

  std::vector<std::string> multi, single;
  auto emit = [&](const std::string& title, const std::string& header, const std::vector<TableRow>& rows) {
    (rows.size() > 1 ? multi : single).push_back(render_table(title + " [" + mode + "]", header, rows));
  };

  std::map<std::pair<std::size_t, Ablation>, std::vector<TableRow>> by_method;
  std::map<std::pair<SplitMethod, Ablation>, std::vector<TableRow>> by_length;
  std::map<std::pair<SplitMethod, std::size_t>, std::vector<TableRow>> by_ablation;
  for (const auto& e : entries) {
    by_method[{e.T, e.ablation}].push_back({to_string(e.method), e.scores});
    by_length[{e.method, e.ablation}].push_back({std::to_string(e.T), e.scores});
    by_ablation[{e.method, e.T}].push_back({to_string(e.ablation), e.scores});
  }
  for (const auto& [k, rows] : by_method)
    emit("Split methods (T=" + std::to_string(k.first) + ", " + to_string(k.second) + ")", "method", rows);
  for (const auto& [k, rows] : by_length)
    emit("Series length (" + to_string(k.first) + ", " + to_string(k.second) + ")", "T", rows);
  for (const auto& [k, rows] : by_ablation)
    emit("Ablation (" + to_string(k.first) + ", T=" + std::to_string(k.second) + ")", "ablation", rows);

  const auto& chosen = multi.empty() ? single : multi;
  std::string out;
  for (std::size_t i = 0; i < chosen.size(); ++i) out += (i ? "\n" : "") + chosen[i];
  return out;
}

}  // namespace unicorn
