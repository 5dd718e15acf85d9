#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "unicorn/datamodel.hpp"
#include "unicorn/errors.hpp"
#include "unicorn/log.hpp"
#include "unicorn/rng.hpp"
#include "unicorn/vocabulary.hpp"

using namespace unicorn;

namespace {

FmriVolume random_volume(Rng& rng, VolumeDims dims) {
  FmriVolume v;
  v.dims = dims;
  v.voxels.resize(dims.voxel_count());
  for (auto& x : v.voxels) x = static_cast<float>(rng.normal());
  return v;
}

RecordingMeta recording(std::size_t frames, double tr, std::vector<TranscriptWord> words) {
  RecordingMeta m{"sub-01", "stim-01", tr, frames, {}, std::move(words)};
  for (std::size_t k = 0; k < frames; ++k) m.volume_paths.push_back("v" + std::to_string(k) + ".cgv");
  return m;
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("unicorn_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("smallest volume is header plus one float") {
  FmriVolume v;
  v.dims = {1, 1, 1};
  v.voxels = {0.0f};
  auto bytes = encode_volume(v);
  CHECK(bytes.size() == 4 + 12 + 4);
  CHECK(bytes.substr(0, 4) == "CGV1");
  auto back = decode_volume(bytes);
  CHECK(back.dims == v.dims);
  CHECK(back.voxels == v.voxels);
}

TEST_CASE("full-scale volume payload size") {
  FmriVolume v;
  v.dims = {64, 64, 27};
  v.voxels.assign(v.dims.voxel_count(), 0.5f);
  CHECK(encode_volume(v).size() == 16 + 442368);
}

TEST_CASE("volume decoding errors") {
  FmriVolume v;
  v.dims = {2, 2, 2};
  v.voxels.assign(8, 1.0f);
  auto bytes = encode_volume(v);
  CHECK_THROWS_AS(decode_volume(bytes.substr(0, bytes.size() - 4)), CorruptionError);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_volume(bad), FormatError);
  v.voxels[3] = std::numeric_limits<float>::quiet_NaN();
  CHECK_THROWS_AS(encode_volume(v), ValidationError);
  auto nan_bytes = bytes;
  const float nan = std::numeric_limits<float>::infinity();
  std::memcpy(nan_bytes.data() + 16, &nan, 4);
  CHECK_THROWS_AS(decode_volume(nan_bytes), ValidationError);
}

TEST_CASE("volume round-trip on random volumes through disk") {
  Rng rng(3);
  auto dir = scratch_dir("volumes");
  for (int i = 0; i < 50; ++i) {
    VolumeDims dims{static_cast<std::uint32_t>(1 + rng.index(6)), static_cast<std::uint32_t>(1 + rng.index(6)),
                    static_cast<std::uint32_t>(1 + rng.index(6))};
    auto v = random_volume(rng, dims);
    write_volume(v, dir / "v.cgv");
    auto back = read_volume(dir / "v.cgv");
    CHECK(back.dims == dims);
    CHECK(std::memcmp(back.voxels.data(), v.voxels.data(), v.voxels.size() * 4) == 0);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("manifest round-trip and strictness") {
  std::vector<RecordingMeta> recs = {recording(3, 1.5, {{"hello", 0.2, 0.5}, {"world", 1.6, 1.9}}),
                                     recording(2, 2.0, {})};
  recs[1].subject_id = "sub-02";
  auto text = encode_manifest(recs);
  auto back = decode_manifest(text);
  CHECK(back == recs);
  CHECK(encode_manifest(back) == text);
  CHECK_THROWS_AS(decode_manifest("{\"subject_id\":\"a\"}\n"), FormatError);
  CHECK_THROWS_AS(decode_manifest("not json\n"), FormatError);
  auto extra = text;
  extra.insert(1, "\"colour\":\"red\",");
  CHECK_THROWS_AS(decode_manifest(extra), FormatError);
}

TEST_CASE("recording validation") {
  auto m = recording(3, 1.5, {});
  m.volume_paths.pop_back();
  CHECK_THROWS_AS(m.validate(), ValidationError);
  auto bad_tr = recording(3, -1.0, {});
  CHECK_THROWS_AS(align_words_to_frames(bad_tr, 0.0), ValidationError);
}

TEST_CASE("alignment uses onset floor") {
  auto m = recording(4, 1.5, {{"w1", 0.2, 0.4}, {"w2", 1.6, 1.65}, {"w3", 1.7, 1.8}});
  auto a = align_words_to_frames(m, 0.0);
  REQUIRE(a.size() == 4);
  CHECK(a[0] == std::vector<std::string>{"w1"});
  CHECK(a[1] == std::vector<std::string>{"w2", "w3"});
  CHECK(a[2].empty());
  auto empty = align_words_to_frames(recording(5, 1.5, {}), 0.0);
  for (const auto& f : empty) CHECK(f.empty());
}

TEST_CASE("lag shifts frames and conserves words") {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<TranscriptWord> words;
    double t = 0.0;
    const std::size_t frames = 40;
    for (int i = 0; i < 30; ++i) {
      t += rng.uniform(0.0, 1.0);
      words.push_back({"w" + std::to_string(i), t, t + 0.1});
    }
    auto m = recording(frames, 1.5, words);
    auto base = align_words_to_frames(m, 0.0);
    auto lagged = align_words_to_frames(m, 4.5);
    // Brute-force frame index per word.
    std::vector<std::string> flat;
    for (const auto& f : base) flat.insert(flat.end(), f.begin(), f.end());
    CHECK(flat.size() == words.size());
    for (std::size_t k = 0; k < frames; ++k)
      for (const auto& w : lagged[k]) {
        const auto& tw = *std::find_if(words.begin(), words.end(), [&](auto& x) { return x.word == w; });
        const auto raw = static_cast<std::size_t>(std::floor(tw.onset_sec / 1.5)) + 3;
        CHECK(k == std::min(raw, frames - 1));
      }
  }
}

TEST_CASE("window enumeration counts") {
  auto counts = [](std::size_t n, std::size_t T, std::size_t stride) {
    auto m = recording(n, 1.0, {});
    std::vector<std::vector<std::string>> align(n, std::vector<std::string>{"x"});
    return build_windows(m, align, T, stride, true).size();
  };
  CHECK(counts(282, 10, 10) == 28);
  CHECK(counts(5, 5, 1) == 1);
  CHECK(counts(100, 10, 1) == 91);
  CHECK(counts(100, 10, 5) == 19);
  const auto before = log::warning_count();
  CHECK(counts(4, 5, 1) == 0);
  CHECK(log::warning_count() == before + 1);
}

TEST_CASE("window targets concatenate frames and drop silence") {
  auto m = recording(4, 1.0, {});
  std::vector<std::vector<std::string>> align = {{"a"}, {}, {"b", "c"}, {}};
  auto kept = build_windows(m, align, 2, 2, true);
  REQUIRE(kept.size() == 2);
  CHECK(kept[0].target_tokens == std::vector<std::string>{"a"});
  CHECK(kept[1].target_tokens == std::vector<std::string>{"b", "c"});
  auto drop = build_windows(m, align, 1, 1, true);
  CHECK(drop.size() == 2);
  CHECK(build_windows(m, align, 1, 1, false).size() == 4);
}

TEST_CASE("tokenize lowercases and splits") {
  CHECK(tokenize("Hello  World\tAgain") == std::vector<std::string>{"hello", "world", "again"});
  CHECK(tokenize("   ").empty());
}

TEST_CASE("synthetic corpus is deterministic and learnable-shaped") {
  SyntheticSpec spec;
  auto a = generate_synthetic_corpus(spec, 7);
  auto b = generate_synthetic_corpus(spec, 7);
  auto c = generate_synthetic_corpus(spec, 8);
  CHECK(a.recordings.size() == 6);
  CHECK(a.volumes.size() == 600);
  CHECK(a.recordings == b.recordings);
  const auto& path = a.recordings[0].volume_paths[5];
  CHECK(a.volumes.load(path)->voxels == b.volumes.load(path)->voxels);
  CHECK(a.volumes.load(path)->voxels != c.volumes.load(path)->voxels);

  WindowingOptions opts;
  opts.series_length = 10;
  opts.stride = 10;
  auto windows = build_all_windows(a.recordings, opts);
  CHECK(windows.size() == 60);
  for (const auto& rec : a.recordings) {
    auto align = align_words_to_frames(rec, 0.0);
    for (const auto& f : align) {
      CHECK(f.size() >= 1);
      CHECK(f.size() <= 4);
    }
  }
  spec.n_subjects = 0;
  CHECK_THROWS_AS(generate_synthetic_corpus(spec, 1), ValidationError);
}

TEST_CASE("loaded windows carry contiguous frames of one recording") {
  SyntheticSpec spec;
  spec.frames_per_stimulus = 30;
  auto corpus = generate_synthetic_corpus(spec, 2);
  WindowingOptions opts;
  opts.series_length = 5;
  opts.stride = 3;
  auto targets = build_all_windows(corpus.recordings, opts);
  auto windows = load_windows(targets, corpus.recordings, corpus.volumes);
  REQUIRE(windows.size() == targets.size());
  for (const auto& w : windows) {
    REQUIRE(w.frames.size() == 5);
    for (std::size_t t = 0; t < w.frames.size(); ++t) {
      CHECK(w.frames[t]->frame_index == w.start_index + t);
      CHECK(w.frames[t]->subject_id == w.subject_id);
      CHECK(w.frames[t]->stimulus_id == w.stimulus_id);
    }
  }
}

TEST_CASE("synthetic corpus on disk matches memory") {
  SyntheticSpec spec;
  spec.n_subjects = 1;
  spec.n_stimuli = 1;
  spec.frames_per_stimulus = 6;
  auto corpus = generate_synthetic_corpus(spec, 4);
  auto dir = scratch_dir("synth");
  write_synthetic_corpus(corpus, dir);
  auto recs = read_manifest(dir / "manifest.jsonl");
  CHECK(recs == corpus.recordings);
  DiskVolumeSource disk(dir);
  for (const auto& p : recs[0].volume_paths) CHECK(disk.load(p)->voxels == corpus.volumes.load(p)->voxels);
  std::filesystem::remove_all(dir);
}

TEST_CASE("synthetic eeg features") {
  SyntheticEegSpec spec;
  auto feats = generate_synthetic_eeg(spec, 1);
  REQUIRE(!feats.empty());
  for (const auto& f : feats) CHECK(f.features.size() == kDefaultEegFeatureDim);
  for (std::size_t i = 1; i < feats.size(); ++i)
    if (feats[i].sentence_id == feats[i - 1].sentence_id && feats[i].subject_id == feats[i - 1].subject_id)
      CHECK(feats[i].word_index > feats[i - 1].word_index);
}

TEST_CASE("vocabulary reserved ids and round trip") {
  auto v = Vocabulary::build({{"b", "a"}, {"a", "c"}});
  CHECK(v.size() == 7);
  CHECK(v.id("<pad>") == Vocabulary::kPad);
  CHECK(v.id("<eos>") == Vocabulary::kEos);
  CHECK(v.id("b") == 4);
  CHECK(v.id("zzz") == Vocabulary::kUnk);
  auto restored = Vocabulary::from_tokens(v.tokens());
  CHECK(restored.tokens() == v.tokens());
  CHECK(v.decode({Vocabulary::kBos, 4, Vocabulary::kUnk, 5, Vocabulary::kEos}) ==
        std::vector<std::string>{"b", "<unk>", "a"});
  CHECK_THROWS_AS(Vocabulary::from_tokens({"a", "b"}), FormatError);
}
