#pragma once

// Recordings, volumes, transcripts and the windows cut from them.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace unicorn {

struct VolumeDims {
  std::uint32_t x = 0, y = 0, z = 0;

  std::size_t voxel_count() const { return std::size_t{x} * y * z; }
  bool operator==(const VolumeDims&) const = default;
};

/// One 3D frame f_k. Voxels are row-major with z varying fastest.
struct FmriVolume {
  std::string subject_id;
  std::string stimulus_id;
  std::size_t frame_index = 0;
  VolumeDims dims;
  std::vector<float> voxels;

  /// Throws ValidationError on size mismatch or non-finite voxels.
  void validate() const;
};

struct TranscriptWord {
  std::string word;
  double onset_sec = 0.0;
  double offset_sec = 0.0;

  bool operator==(const TranscriptWord&) const = default;
};

/// One subject listening to one stimulus.
struct RecordingMeta {
  std::string subject_id;
  std::string stimulus_id;
  double tr_seconds = 0.0;
  std::size_t n_frames = 0;
  std::vector<std::string> volume_paths;
  std::vector<TranscriptWord> transcript;

  void validate() const;
  bool operator==(const RecordingMeta&) const = default;
};

/// Identity of a series window F^{ij}_{k~T}.
struct WindowKey {
  std::string subject_id;
  std::string stimulus_id;
  std::size_t start_index = 0;
  std::size_t series_length = 0;

  auto operator<=>(const WindowKey&) const = default;
  std::string to_string() const;
};

/// Window key plus the tokens it is supervised with; frames are loaded
/// separately so plans stay cheap to enumerate and split.
struct WindowTarget {
  WindowKey key;
  std::vector<std::string> target_tokens;
};

struct FmriSeriesWindow {
  std::string subject_id;
  std::string stimulus_id;
  std::size_t start_index = 0;
  std::size_t series_length = 0;
  std::vector<std::shared_ptr<const FmriVolume>> frames;
  std::vector<std::string> target_tokens;

  WindowKey key() const { return {subject_id, stimulus_id, start_index, series_length}; }
};

/// Word-level EEG feature e_k (default 840 = 105 channels x 8 bands).
struct EegWordFeature {
  std::string subject_id;
  std::string sentence_id;
  std::size_t word_index = 0;
  std::vector<double> features;
  std::string word;
};

inline constexpr std::size_t kDefaultEegFeatureDim = 840;

// --- Volume binary format -------------------------------------------------
//
// "CGV1", three little-endian uint32 dims (X, Y, Z), then X*Y*Z little-endian
// IEEE-754 float32 voxels.

std::string encode_volume(const FmriVolume& volume);
FmriVolume decode_volume(std::string_view bytes);
void write_volume(const FmriVolume& volume, const std::filesystem::path& path);
FmriVolume read_volume(const std::filesystem::path& path);

// --- Manifest (one JSON record per line) ----------------------------------

std::string encode_manifest(const std::vector<RecordingMeta>& recordings);
std::vector<RecordingMeta> decode_manifest(std::string_view text);
void write_manifest(const std::vector<RecordingMeta>& recordings, const std::filesystem::path& path);
std::vector<RecordingMeta> read_manifest(const std::filesystem::path& path);

// --- EEG word features (one JSON record per line) -------------------------

std::string encode_eeg_features(const std::vector<EegWordFeature>& features);
std::vector<EegWordFeature> decode_eeg_features(std::string_view text);
void write_eeg_features(const std::vector<EegWordFeature>& features, const std::filesystem::path& path);
std::vector<EegWordFeature> read_eeg_features(const std::filesystem::path& path);

// --- Alignment and windows -------------------------------------------------

/// Lowercases and whitespace-splits a transcript word into decoder tokens.
std::vector<std::string> tokenize(std::string_view text);

/// Frame index -> words, using floor((onset + lag) / TR) clamped to the run.
std::vector<std::vector<std::string>> align_words_to_frames(const RecordingMeta& meta, double lag_sec);

/// Windows starting at 0, stride, 2*stride, ... fully inside the recording.
std::vector<WindowTarget> build_windows(const RecordingMeta& meta,
                                        const std::vector<std::vector<std::string>>& alignment,
                                        std::size_t series_length, std::size_t stride, bool drop_empty);

struct WindowingOptions {
  std::size_t series_length = 10;
  std::size_t stride = 0;  // 0 means "same as series_length"
  double lag_sec = 0.0;
  bool drop_empty = true;
};

/// Aligns and windows every recording of a manifest.
std::vector<WindowTarget> build_all_windows(const std::vector<RecordingMeta>& recordings,
                                            const WindowingOptions& options);

/// Loads volumes by manifest path. Implementations must be safe to share.
class VolumeSource {
 public:
  virtual ~VolumeSource() = default;
  virtual std::shared_ptr<const FmriVolume> load(const std::string& path) const = 0;
};

/// Reads volumes relative to a base directory and caches them.
class DiskVolumeSource : public VolumeSource {
 public:
  explicit DiskVolumeSource(std::filesystem::path base) : base_(std::move(base)) {}
  std::shared_ptr<const FmriVolume> load(const std::string& path) const override;

 private:
  std::filesystem::path base_;
  mutable std::mutex mutex_;
  mutable std::unordered_map<std::string, std::shared_ptr<const FmriVolume>> cache_;
};

class MemoryVolumeSource : public VolumeSource {
 public:
  void add(const std::string& path, FmriVolume volume);
  std::shared_ptr<const FmriVolume> load(const std::string& path) const override;
  std::size_t size() const { return volumes_.size(); }

 private:
  std::unordered_map<std::string, std::shared_ptr<const FmriVolume>> volumes_;
};

/// Attaches frames to window targets; subject/stimulus/frame fields of the
/// loaded volumes are filled from the manifest.
std::vector<FmriSeriesWindow> load_windows(const std::vector<WindowTarget>& targets,
                                           const std::vector<RecordingMeta>& recordings,
                                           const VolumeSource& source);

// --- Synthetic corpora -----------------------------------------------------

struct SyntheticSpec {
  std::size_t n_subjects = 3;
  std::size_t n_stimuli = 2;
  std::size_t frames_per_stimulus = 100;
  VolumeDims dims{16, 16, 8};
  std::size_t vocab_size = 50;
  double tr_seconds = 1.5;
  double noise_sigma = 0.005;

  void validate() const;
};

struct SyntheticCorpus {
  std::vector<RecordingMeta> recordings;
  std::vector<std::string> vocabulary;
  MemoryVolumeSource volumes;
};

/// Deterministic corpus: every stimulus is a random word sequence with 1-4
/// words per TR; each word leaves a smooth spatial bump in its frame, scaled
/// by its position within the frame; subjects differ by a smooth background.
SyntheticCorpus generate_synthetic_corpus(const SyntheticSpec& spec, std::uint64_t seed);

/// Writes manifest.jsonl and the volume tree under `out_dir`.
void write_synthetic_corpus(const SyntheticCorpus& corpus, const std::filesystem::path& out_dir);

struct SyntheticEegSpec {
  std::size_t n_subjects = 2;
  std::size_t n_sentences = 8;
  std::size_t min_words = 4;
  std::size_t max_words = 10;
  std::size_t feature_dim = kDefaultEegFeatureDim;
  std::size_t vocab_size = 40;
  double noise_sigma = 0.05;
};

/// Word-level EEG features: each word has a fixed signature vector, each
/// subject a fixed offset, plus noise.
std::vector<EegWordFeature> generate_synthetic_eeg(const SyntheticEegSpec& spec, std::uint64_t seed);

/// Generated pseudo-word for vocabulary slot `index` (distinct per index).
std::string synthetic_word(std::size_t index);

}  // namespace unicorn
