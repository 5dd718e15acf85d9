#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <sys/wait.h>

#include "temp_dir.hpp"
#include "unicorn/config.hpp"

using namespace unicorn;
namespace fs = std::filesystem;

namespace {

struct Run {
  int exit_code;
  std::string output;
};

Run cli(const fs::path& workdir, const std::string& args, const std::string& env = "") {
  const std::string command =
      env + " " + UNICORN_CLI_PATH + " --quiet --workdir '" + workdir.string() + "' " + args + " 2>&1";
  FILE* pipe = ::popen(command.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string output;
  char buffer[4096];
  while (std::size_t n = std::fread(buffer, 1, sizeof buffer, pipe)) output.append(buffer, n);
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, output};
}

void write(const fs::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_text_file(e.path());
  return out;
}

const char* kSmallSpec =
    "n_subjects=2\n"
    "n_stimuli=2\n"
    "frames_per_stimulus=16\n"
    "dims=8,8,4\n"
    "vocab_size=10\n";

const char* kTinyConfig =
    "data.manifest=data/manifest.jsonl\n"
    "data.series_length=4\n"
    "model.volume_dims=8,8,4\n"
    "model.conv_channels=2,3,4,4\n"
    "model.deconv_channels=3,2\n"
    "model.snapshot_dim=8\n"
    "model.series_layers=1\n"
    "model.series_heads=2\n"
    "model.decoder_dim=8\n"
    "model.decoder_layers=1\n"
    "model.decoder_heads=2\n"
    "phase1.epochs=2\n"
    "phase2.epochs=2\n"
    "phase2.series_length=2\n"
    "phase3.epochs=3\n";

}  // namespace

TEST_CASE("cli synth: determinism, usage and validation exit codes") {
  testing::TempDir dir("cli_synth");
  write(dir / "small.cfg", kSmallSpec);
  REQUIRE(cli(dir.path(), "synth --spec small.cfg --seed 7 --out a").exit_code == 0);
  REQUIRE(cli(dir.path(), "synth --spec small.cfg --seed 7 --out b").exit_code == 0);
  CHECK(tree(dir / "a") == tree(dir / "b"));
  CHECK(tree(dir / "a").size() == 1 + 2 * 2 * 16);

  const Run missing_out = cli(dir.path(), "synth --spec small.cfg");
  CHECK(missing_out.exit_code == 2);
  CHECK(missing_out.output.find("Usage") != std::string::npos);

  write(dir / "zero.cfg", "n_subjects=0\n");
  const Run zero = cli(dir.path(), "synth --spec zero.cfg --out z");
  CHECK(zero.exit_code == 2);
  CHECK(zero.output.find("n_subjects") != std::string::npos);

  CHECK(cli(dir.path(), "synth --modality eeg --out eeg").exit_code == 0);
  CHECK(fs::exists(dir / "eeg" / "eeg_features.jsonl"));
  CHECK(cli(dir.path(), "frobnicate").exit_code == 2);
}

TEST_CASE("cli split: certificate output, default ratios and infeasibility") {
  testing::TempDir dir("cli_split");
  write(dir / "small.cfg", kSmallSpec);
  REQUIRE(cli(dir.path(), "synth --spec small.cfg --seed 1 --out data").exit_code == 0);

  const Run consecutive = cli(dir.path(),
                              "split --manifest data/manifest.jsonl --series-length 4 --method consecutive_time "
                              "--seed 3 --out split.json");
  CHECK(consecutive.exit_code == 0);
  CHECK(consecutive.output.find("ratios: 0.70/0.15/0.15") != std::string::npos);
  CHECK(consecutive.output.find("[stim-01] max_train_start < min_test_start: PASS") != std::string::npos);
  CHECK(consecutive.output.find("[stim-02] max_train_start < min_test_start: PASS") != std::string::npos);
  CHECK(consecutive.output.find("certificate: PASS") != std::string::npos);
  CHECK(fs::exists(dir / "split.json"));

  const Run by_subject =
      cli(dir.path(), "split --manifest data/manifest.jsonl --series-length 4 --method by_subject --out s.json");
  CHECK(by_subject.exit_code == 3);
  CHECK(by_subject.output.find("infeasible") != std::string::npos);

  const Run seeded = cli(dir.path(), "split --manifest data/manifest.jsonl --series-length 4 --out s2.json",
                         "UNICORN_SEED=42");
  CHECK(seeded.output.find("seed: 42") != std::string::npos);

  CHECK(cli(dir.path(), "split --manifest data/manifest.jsonl --ratios 0.5,0.5,0.5 --out s3.json").exit_code == 2);
  CHECK(cli(dir.path(), "split --manifest nowhere.jsonl --out s4.json").exit_code == 2);
}

TEST_CASE("cli train, eval, decode and report") {
  testing::TempDir dir("cli_train");
  write(dir / "small.cfg", kSmallSpec);
  write(dir / "run.cfg", kTinyConfig);
  REQUIRE(cli(dir.path(), "synth --spec small.cfg --seed 2 --out data").exit_code == 0);
  REQUIRE(cli(dir.path(), "split --config run.cfg --method random_time --out split.json").exit_code == 0);

  SUBCASE("phase 2 without a phase-1 checkpoint is a missing prerequisite") {
    CHECK(cli(dir.path(), "train --config run.cfg --split split.json --phase 2 --out r").exit_code == 4);
    CHECK(cli(dir.path(), "train --config run.cfg --split split.json --phase 2 --ablation wo_p1 --out r2").exit_code ==
          0);
  }

  SUBCASE("wo_p2 runs phases 1 and 3") {
    const Run r = cli(dir.path(), "train --config run.cfg --split split.json --phase all --ablation wo_p2 --out r");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("completed phases: {1,3}") != std::string::npos);
    CHECK(fs::exists(dir / "r" / "phase1.ckpt"));
    CHECK(fs::exists(dir / "r" / "phase3.ckpt"));
    CHECK_FALSE(fs::exists(dir / "r" / "phase2.ckpt"));
    const std::string metrics = read_text_file(dir / "r" / "metrics.jsonl");
    CHECK(metrics.find("\"phase\":1") != std::string::npos);
    CHECK(metrics.find("\"phase\":2") == std::string::npos);
  }

  SUBCASE("phases chained one at a time and evaluation") {
    REQUIRE(cli(dir.path(), "train --config run.cfg --split split.json --phase 1 --out r").exit_code == 0);
    CHECK(cli(dir.path(), "eval --checkpoint r/model.ckpt --split split.json").exit_code == 4);
    REQUIRE(cli(dir.path(), "train --config run.cfg --split split.json --phase 2 --out r").exit_code == 0);
    const Run p3 = cli(dir.path(), "train --config run.cfg --split split.json --phase 3 --out r");
    REQUIRE(p3.exit_code == 0);
    CHECK(p3.output.find("completed phases: {1,2,3}") != std::string::npos);

    const Run ev = cli(dir.path(), "eval --checkpoint r/model.ckpt --split split.json --set test --out ev");
    CHECK(ev.exit_code == 0);
    CHECK(ev.output.find("BLEU-1") != std::string::npos);
    const std::string report = read_text_file(dir / "ev" / "report.json");
    CHECK(report.find("\"phase3.epochs\": \"3\"") != std::string::npos);

    const Run dec = cli(dir.path(), "decode --checkpoint r/model.ckpt --split split.json --mode greedy --limit 2");
    CHECK(dec.exit_code == 0);
    CHECK(dec.output.find("\nT: ") != std::string::npos);
    CHECK(dec.output.find("\nP: ") != std::string::npos);

    CHECK(cli(dir.path(), "train --config run.cfg --split split.json --phase all --resume --out r").exit_code == 0);
  }

  SUBCASE("grid and report list the series-length rows") {
    const Run g = cli(dir.path(), "grid --config run.cfg --methods random_time --lengths 1,3,5 --out grid");
    CHECK(g.exit_code == 0);
    const Run rep = cli(dir.path(), "report --grid grid --out tables.txt");
    CHECK(rep.exit_code == 0);
    for (const char* row : {"\n1 ", "\n3 ", "\n5 "}) CHECK(rep.output.find(row) != std::string::npos);
    CHECK(fs::exists(dir / "tables.txt"));
  }
}
