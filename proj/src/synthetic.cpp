#include <array>
#include <cmath>
#include <cstdio>

#include "unicorn/datamodel.hpp"
#include "unicorn/errors.hpp"
#include "unicorn/rng.hpp"

namespace unicorn {
namespace {

constexpr std::array<const char*, 20> kSyllables = {"ka", "lo", "mi", "nu", "pe", "ra", "so", "ti", "vu", "ze",
                                                    "ba", "do", "fi", "gu", "he", "ja", "ko", "li", "mo", "ne"};

std::string padded(const char* prefix, std::size_t value) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%s-%02zu", prefix, value);
  return buffer;
}

std::string frame_path(const std::string& subject, const std::string& stimulus, std::size_t k) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "frame-%04zu.cgv", k);
  return "volumes/" + subject + "/" + stimulus + "/" + buffer;
}

struct Blob {
  double cx, cy, cz;
  double sx, sy, sz;
  double amplitude;
};

Blob random_blob(Rng& rng, const VolumeDims& dims, double width_fraction, double amplitude) {
  Blob b{};
  b.cx = rng.uniform(0.0, dims.x - 1.0);
  b.cy = rng.uniform(0.0, dims.y - 1.0);
  b.cz = rng.uniform(0.0, dims.z - 1.0);
  b.sx = std::max(1.0, width_fraction * dims.x);
  b.sy = std::max(1.0, width_fraction * dims.y);
  b.sz = std::max(1.0, width_fraction * dims.z);
  b.amplitude = amplitude;
  return b;
}

void add_blob(std::vector<double>& field, const VolumeDims& dims, const Blob& b, double scale) {
  for (std::uint32_t x = 0; x < dims.x; ++x)
    for (std::uint32_t y = 0; y < dims.y; ++y)
      for (std::uint32_t z = 0; z < dims.z; ++z) {
        const double dx = (x - b.cx) / b.sx, dy = (y - b.cy) / b.sy, dz = (z - b.cz) / b.sz;
        field[(std::size_t{x} * dims.y + y) * dims.z + z] += scale * b.amplitude * std::exp(-0.5 * (dx * dx + dy * dy + dz * dz));
      }
}

}  // namespace

std::string synthetic_word(std::size_t index) {
  // Base-20 digits, at least two syllables; distinct for distinct indices.
  std::string word;
  std::size_t n = index;
  std::size_t digits = 0;
  do {
    word += kSyllables[n % kSyllables.size()];
    n /= kSyllables.size();
    ++digits;
  } while (n > 0 || digits < 2);
  return word;
}

void SyntheticSpec::validate() const {
  if (n_subjects == 0) throw ValidationError("n_subjects must be positive");
  if (n_stimuli == 0) throw ValidationError("n_stimuli must be positive");
  if (frames_per_stimulus == 0) throw ValidationError("frames_per_stimulus must be positive");
  if (dims.x == 0 || dims.y == 0 || dims.z == 0) throw ValidationError("dims must be positive");
  if (vocab_size == 0) throw ValidationError("vocab_size must be positive");
  if (!(tr_seconds > 0.0)) throw ValidationError("tr_seconds must be positive");
  if (!(noise_sigma >= 0.0)) throw ValidationError("noise_sigma must be non-negative");
}

SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  SyntheticCorpus corpus;
  for (std::size_t i = 0; i < spec.vocab_size; ++i) corpus.vocabulary.push_back(synthetic_word(i));

  Rng word_rng(derive_seed(seed, 1));
  std::vector<Blob> signatures;
  for (std::size_t i = 0; i < spec.vocab_size; ++i) signatures.push_back(random_blob(word_rng, spec.dims, 0.1, 1.0));

  // Stimulus scripts are shared by all subjects.
  struct FrameWords {
    std::vector<std::size_t> words;
  };
  std::vector<std::vector<FrameWords>> scripts(spec.n_stimuli);
  Rng script_rng(derive_seed(seed, 2));
  for (auto& script : scripts) {
    script.resize(spec.frames_per_stimulus);
    for (auto& frame : script) {
      const std::size_t count = 1 + script_rng.index(4);
      for (std::size_t c = 0; c < count; ++c) frame.words.push_back(script_rng.index(spec.vocab_size));
    }
  }

  Rng subject_rng(derive_seed(seed, 3));
  std::vector<std::vector<double>> backgrounds(spec.n_subjects, std::vector<double>(spec.dims.voxel_count(), 0.0));
  for (auto& background : backgrounds) {
    for (int b = 0; b < 2; ++b) {
      const double sign = subject_rng.uniform() < 0.5 ? -1.0 : 1.0;
      add_blob(background, spec.dims, random_blob(subject_rng, spec.dims, 0.3, 0.3 * sign), 1.0);
    }
  }

  // Word bumps depend only on the script; cache them per (stimulus, frame).
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    const std::string subject = padded("sub", s + 1);
    for (std::size_t j = 0; j < spec.n_stimuli; ++j) {
      const std::string stimulus = padded("stim", j + 1);
      RecordingMeta meta;
      meta.subject_id = subject;
      meta.stimulus_id = stimulus;
      meta.tr_seconds = spec.tr_seconds;
      meta.n_frames = spec.frames_per_stimulus;
      Rng noise_rng(derive_seed(seed, 1000 + s * spec.n_stimuli + j));
      for (std::size_t k = 0; k < spec.frames_per_stimulus; ++k) {
        const auto& words = scripts[j][k].words;
        const double count = static_cast<double>(words.size());
        std::vector<double> field = backgrounds[s];
        for (std::size_t p = 0; p < words.size(); ++p) {
          add_blob(field, spec.dims, signatures[words[p]], 1.0 - 0.2 * static_cast<double>(p));
          const double onset = (static_cast<double>(k) + (static_cast<double>(p) + 0.25) / count) * spec.tr_seconds;
          const double offset = onset + 0.5 * spec.tr_seconds / count;
          meta.transcript.push_back({corpus.vocabulary[words[p]], onset, offset});
        }
        FmriVolume volume;
        volume.subject_id = subject;
        volume.stimulus_id = stimulus;
        volume.frame_index = k;
        volume.dims = spec.dims;
        volume.voxels.resize(field.size());
        for (std::size_t v = 0; v < field.size(); ++v)
          volume.voxels[v] = static_cast<float>(field[v] + spec.noise_sigma * noise_rng.normal());
        const std::string path = frame_path(subject, stimulus, k);
        meta.volume_paths.push_back(path);
        corpus.volumes.add(path, std::move(volume));
      }
      corpus.recordings.push_back(std::move(meta));
    }
  }
  return corpus;
}

void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& meta : corpus.recordings) {
    for (const auto& path : meta.volume_paths) {
      const auto target = out_dir / path;
      std::filesystem::create_directories(target.parent_path());
      write_volume(*corpus.volumes.load(path), target);
    }
  }
  write_manifest(corpus.recordings, out_dir / "manifest.jsonl");
}

std::vector<EegWordFeature> generate_synthetic_eeg(const SyntheticEegSpec& spec, std::uint64_t seed) {
  if (spec.n_subjects == 0) throw ValidationError("n_subjects must be positive");
  if (spec.n_sentences == 0) throw ValidationError("n_sentences must be positive");
  if (spec.feature_dim == 0) throw ValidationError("feature_dim must be positive");
  if (spec.vocab_size == 0) throw ValidationError("vocab_size must be positive");
  if (spec.min_words == 0 || spec.max_words < spec.min_words)
    throw ValidationError("synthetic EEG spec needs 1 <= min_words <= max_words");
  Rng word_rng(derive_seed(seed, 11));
  std::vector<std::vector<double>> signatures(spec.vocab_size, std::vector<double>(spec.feature_dim));
  for (auto& sig : signatures)
    for (auto& v : sig) v = 0.5 * word_rng.normal();

  Rng script_rng(derive_seed(seed, 12));
  std::vector<std::vector<std::size_t>> sentences(spec.n_sentences);
  for (auto& sentence : sentences) {
    const std::size_t n = spec.min_words + script_rng.index(spec.max_words - spec.min_words + 1);
    for (std::size_t w = 0; w < n; ++w) sentence.push_back(script_rng.index(spec.vocab_size));
  }

  std::vector<EegWordFeature> features;
  for (std::size_t s = 0; s < spec.n_subjects; ++s) {
    Rng subject_rng(derive_seed(seed, 100 + s));
    std::vector<double> offset(spec.feature_dim);
    for (auto& v : offset) v = 0.1 * subject_rng.normal();
    for (std::size_t j = 0; j < sentences.size(); ++j) {
      for (std::size_t w = 0; w < sentences[j].size(); ++w) {
        EegWordFeature f;
        f.subject_id = padded("sub", s + 1);
        f.sentence_id = padded("sent", j + 1);
        f.word_index = w;
        f.word = synthetic_word(sentences[j][w]);
        f.features.resize(spec.feature_dim);
        for (std::size_t d = 0; d < spec.feature_dim; ++d)
          f.features[d] = signatures[sentences[j][w]][d] + offset[d] + spec.noise_sigma * subject_rng.normal();
        features.push_back(std::move(f));
      }
    }
  }
  return features;
}

}  // namespace unicorn
