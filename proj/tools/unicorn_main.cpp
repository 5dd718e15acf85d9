// unicorn: command-line front end for synthesis, splitting, training,
// evaluation and experiment reports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "unicorn/config.hpp"
#include "unicorn/errors.hpp"
#include "unicorn/experiment.hpp"
#include "unicorn/log.hpp"

namespace fs = std::filesystem;
using namespace unicorn;

namespace {

constexpr int kExitInternal = 1;
constexpr int kExitValidation = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitPrerequisite = 4;

struct Globals {
  std::string workdir = ".";
  bool quiet = false;

  fs::path path(const std::string& p) const {
    const fs::path candidate(p);
    return candidate.is_absolute() ? candidate : fs::path(workdir) / candidate;
  }
};

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open " + path.string() + " for writing");
  out << text;
}

/// Config file (or defaults), then UNICORN_SEED.
RunConfig load_config(const Globals& g, const std::string& path) {
  RunConfig c = path.empty() ? RunConfig::defaults("desk", Modality::fmri) : RunConfig::load(g.path(path));
  c.apply_environment();
  return c;
}

// --- synth ------------------------------------------------------------------

struct SynthArgs {
  std::string spec, out, modality = "fmri";
  std::uint64_t seed = 0;
};

int run_synth(const Globals& g, const SynthArgs& a) {
  const std::string text = a.spec.empty() ? std::string() : read_text_file(g.path(a.spec));
  const fs::path out = g.path(a.out);
  if (parse_modality(a.modality) == Modality::eeg) {
    const auto features = generate_synthetic_eeg(parse_synthetic_eeg_spec(text), a.seed);
    fs::create_directories(out);
    write_eeg_features(features, out / "eeg_features.jsonl");
    std::cout << "wrote " << features.size() << " word features to " << (out / "eeg_features.jsonl").string() << "\n";
  } else {
    const auto corpus = generate_synthetic_corpus(parse_synthetic_spec(text), a.seed);
    write_synthetic_corpus(corpus, out);
    std::cout << "wrote " << corpus.recordings.size() << " recordings, " << corpus.volumes.size() << " volumes to "
              << out.string() << "\n";
  }
  return 0;
}

// --- split ------------------------------------------------------------------

struct SplitArgs {
  std::string config, manifest, eeg_features, method, ratios, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> series_length, stride;
  bool purge = false;
};

int run_split(const Globals& g, const SplitArgs& a) {
  RunConfig c = load_config(g, a.config);
  if (!a.manifest.empty()) c.data.manifest = a.manifest;
  if (!a.eeg_features.empty()) c.data.eeg_features = a.eeg_features;
  if (!a.method.empty()) c.split.method = parse_split_method(a.method);
  if (!a.ratios.empty()) c.split.ratios = parse_ratios(a.ratios);
  if (a.seed) c.set("seed", std::to_string(*a.seed));
  if (a.series_length) c.data.series_length = *a.series_length;
  if (a.stride) c.data.stride = *a.stride;
  if (a.purge) c.split.purge_overlap = true;
  c.split.ratios.validate();

  const auto samples = load_corpus_samples(c, g.workdir);
  const SplitAssignment split =
      generate_split(sample_keys(samples), c.split.method, c.split.ratios, c.seed, c.split.purge_overlap);
  const SplitCertificate cert = verify_split(split);
  std::cout << "method: " << to_string(split.method) << "\n"
            << "ratios: " << format_ratios(split.ratios) << "\n"
            << "seed: " << split.seed << "\n"
            << "windows: " << samples.size() << "\n"
            << cert.render();
  write_split(split, g.path(a.out));
  std::cout << "split written to " << g.path(a.out).string() << "\n";
  return cert.passed() ? 0 : kExitValidation;
}

// --- train ------------------------------------------------------------------

struct TrainArgs {
  std::string config, split, phase = "all", ablation, out = "run";
  bool resume = false;
};

std::vector<int> parse_phases(const std::string& text) {
  if (text == "all") return {1, 2, 3};
  if (text == "1" || text == "2" || text == "3") return {std::stoi(text)};
  throw ValidationError("--phase must be 1, 2, 3 or all");
}

int run_train(const Globals& g, const TrainArgs& a) {
  RunConfig c = load_config(g, a.config);
  if (!a.ablation.empty()) c.training.ablation = parse_ablation(a.ablation);
  c.validate();
  const std::vector<int> phases = parse_phases(a.phase);
  const SplitAssignment split = read_split(g.path(a.split));
  const auto samples = load_corpus_samples(c, g.workdir);

  TrainingData data{select_samples(samples, split.train), select_samples(samples, split.val)};
  TrainRunOptions options;
  options.phases = phases;
  options.resume = a.resume;
  options.out_dir = g.path(a.out);
  const ModelBundle bundle = train_run(c, data, options);

  std::string done;
  for (int p : bundle.completed_phases()) done += (done.empty() ? "" : ",") + std::to_string(p);
  std::cout << "ablation: " << to_string(c.training.ablation) << "\n"
            << "completed phases: {" << done << "}\n"
            << "checkpoint: " << (options.out_dir / "model.ckpt").string() << "\n";
  return 0;
}

// --- eval / decode ----------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, split, set = "test", mode, config, out;
  std::optional<std::size_t> beam_width, max_length, limit;
};

struct Loaded {
  Checkpoint ckpt;
  RunConfig config;
  std::vector<SeriesSample> samples;
};

Loaded load_for_eval(const Globals& g, const EvalArgs& a) {
  Checkpoint ckpt = load_checkpoint(g.path(a.checkpoint));
  RunConfig c = !a.config.empty()            ? load_config(g, a.config)
                : ckpt.run_config.is_object() ? RunConfig::from_json(ckpt.run_config)
                                              : load_config(g, "");
  if (!ckpt.bundle.completed_phases().count(3))
    throw MissingPrerequisiteError("checkpoint " + a.checkpoint + " has not completed phase 3");
  if (!a.mode.empty()) c.eval.decode.mode = parse_decode_mode(a.mode);
  if (a.beam_width) c.eval.decode.beam_width = *a.beam_width;
  if (a.max_length) c.eval.decode.max_length = *a.max_length;
  const SplitAssignment split = read_split(g.path(a.split));
  auto samples = select_samples(load_corpus_samples(c, g.workdir), split_part(split, a.set));
  if (a.limit && samples.size() > *a.limit) samples.resize(*a.limit);
  return {std::move(ckpt), std::move(c), std::move(samples)};
}

int run_eval(const Globals& g, const EvalArgs& a) {
  Loaded l = load_for_eval(g, a);
  EvalReport report = evaluate(l.ckpt.bundle, l.samples, l.config.eval);
  report.config = l.config.to_json();
  report.provenance["checkpoint"] = a.checkpoint;
  report.provenance["split"] = a.split;
  report.provenance["set"] = a.set;
  std::cout << report.render();
  if (!a.out.empty()) {
    const fs::path out = g.path(a.out);
    write_file(out / "report.json", report.to_json());
    write_file(out / "report.txt", report.render());
    std::cout << "report written to " << out.string() << "\n";
  }
  return 0;
}

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (const auto& t : tokens) out += (out.empty() ? "" : " ") + t;
  return out;
}

int run_decode(const Globals& g, const EvalArgs& a) {
  Loaded l = load_for_eval(g, a);
  const EvalReport report = evaluate(l.ckpt.bundle, l.samples, l.config.eval);
  for (const auto& r : report.records) {
    std::cout << "# " << r.id << "\n"
              << "T: " << join(r.gold) << "\n"
              << "P: " << join(r.predicted) << "\n";
  }
  return 0;
}

// --- grid / report ----------------------------------------------------------

struct GridArgs {
  std::string config, methods = "random_time", lengths = "10", ablations = "full", out = "grid";
};

int run_grid(const Globals& g, const GridArgs& a) {
  const RunConfig c = load_config(g, a.config);
  c.validate();
  const auto outcomes = run_experiment_grid(c, parse_grid(a.methods, a.lengths, a.ablations), g.workdir, g.path(a.out));
  std::size_t failed = 0;
  for (const auto& o : outcomes) {
    std::cout << o.cell.directory() << ": " << o.status << (o.error.empty() ? "" : " (" + o.error + ")") << "\n";
    failed += o.status == "failed";
  }
  std::cout << render_grid_report(g.path(a.out));
  return failed ? kExitInternal : 0;
}

int run_report(const Globals& g, const std::string& grid, const std::string& out) {
  const std::string text = render_grid_report(g.path(grid));
  std::cout << text;
  if (!out.empty()) write_file(g.path(out), text);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"unicorn: brain-signal to text decoding pipeline"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--workdir", g.workdir, "Root that relative paths resolve against");
  app.add_flag("--quiet", g.quiet, "Only print warnings and errors");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth_cmd->add_option("--spec", synth.spec, "key=value spec file (defaults when omitted)");
  synth_cmd->add_option("--seed", synth.seed, "Generator seed");
  synth_cmd->add_option("--out", synth.out, "Output directory")->required();
  synth_cmd->add_option("--modality", synth.modality, "fmri or eeg");

  SplitArgs split;
  auto* split_cmd = app.add_subcommand("split", "Split windows into train/val/test and certify the split");
  split_cmd->add_option("--config", split.config, "Run config (data settings)");
  split_cmd->add_option("--manifest", split.manifest, "fMRI manifest (overrides data.manifest)");
  split_cmd->add_option("--eeg-features", split.eeg_features, "EEG features (overrides data.eeg_features)");
  split_cmd->add_option("--method", split.method,
                        "random | random_time | consecutive_time | by_stimuli | by_subject");
  split_cmd->add_option("--ratios", split.ratios, "train,val,test (default 0.70/0.15/0.15)");
  split_cmd->add_option("--seed", split.seed, "Split seed (overrides config)");
  split_cmd->add_option("--series-length", split.series_length, "Window length T");
  split_cmd->add_option("--stride", split.stride, "Window stride");
  split_cmd->add_flag("--purge-overlap", split.purge, "Drop held-out windows overlapping training frames");
  split_cmd->add_option("--out", split.out, "Split file")->required();

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Run training phases");
  train_cmd->add_option("--config", train.config, "Run config");
  train_cmd->add_option("--split", train.split, "Split file")->required();
  train_cmd->add_option("--phase", train.phase, "1, 2, 3 or all");
  train_cmd->add_option("--ablation", train.ablation, "full | wo_p1 | wo_p2 | wo_p1p2");
  train_cmd->add_flag("--resume", train.resume, "Continue from <out>/model.ckpt");
  train_cmd->add_option("--out", train.out, "Run directory (checkpoints and metrics.jsonl)");

  EvalArgs eval;
  auto add_eval_options = [&](CLI::App* cmd) {
    cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint that completed phase 3")->required();
    cmd->add_option("--split", eval.split, "Split file")->required();
    cmd->add_option("--set", eval.set, "train, val or test");
    cmd->add_option("--mode", eval.mode, "teacher_forced | greedy | beam");
    cmd->add_option("--beam-width", eval.beam_width, "Beam width");
    cmd->add_option("--max-length", eval.max_length, "Generation cap");
    cmd->add_option("--config", eval.config, "Run config (defaults to the checkpoint's echo)");
    cmd->add_option("--limit", eval.limit, "Evaluate at most this many windows");
  };
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split part");
  add_eval_options(eval_cmd);
  eval_cmd->add_option("--out", eval.out, "Directory for report.json and report.txt");
  auto* decode_cmd = app.add_subcommand("decode", "Print gold (T:) and predicted (P:) sentences");
  add_eval_options(decode_cmd);

  GridArgs grid;
  auto* grid_cmd = app.add_subcommand("grid", "Run an experiment grid");
  grid_cmd->add_option("--config", grid.config, "Base run config");
  grid_cmd->add_option("--methods", grid.methods, "Comma-separated split methods");
  grid_cmd->add_option("--lengths", grid.lengths, "Comma-separated series lengths");
  grid_cmd->add_option("--ablations", grid.ablations, "Comma-separated ablations");
  grid_cmd->add_option("--out", grid.out, "Grid directory");

  std::string report_grid, report_out;
  auto* report_cmd = app.add_subcommand("report", "Render tables from a grid directory");
  report_cmd->add_option("--grid", report_grid, "Grid directory")->required();
  report_cmd->add_option("--out", report_out, "Also write the tables here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* failing = &app;
    for (auto* sub : app.get_subcommands()) failing = sub;
    std::cerr << failing->help();
    return kExitValidation;
  }
  log::set_level(g.quiet ? log::Level::warn : log::Level::info);

  try {
    if (*synth_cmd) return run_synth(g, synth);
    if (*split_cmd) return run_split(g, split);
    if (*train_cmd) return run_train(g, train);
    if (*eval_cmd) return run_eval(g, eval);
    if (*decode_cmd) return run_decode(g, eval);
    if (*grid_cmd) return run_grid(g, grid);
    if (*report_cmd) return run_report(g, report_grid, report_out);
  } catch (const InfeasibleSplitError& e) {
    std::cerr << "infeasible split: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const MissingPrerequisiteError& e) {
    std::cerr << "missing prerequisite: " << e.what() << "\n";
    return kExitPrerequisite;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const CorruptionError& e) {
    std::cerr << "corrupt input: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
