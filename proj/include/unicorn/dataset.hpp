#pragma once

// Modality-independent training samples: a run of snapshot signals from one
// recording plus the tokens it is supervised with.

#include <string>
#include <vector>

#include "unicorn/datamodel.hpp"
#include "unicorn/tensor.hpp"
#include "unicorn/vocabulary.hpp"

namespace unicorn {

struct SeriesSample {
  WindowKey key;  // EEG sentences use {subject, sentence, 0, word count}
  std::string id;
  std::string recording;        // "subject/stimulus" or "subject/sentence"
  std::size_t first_index = 0;  // position of frames[0] within the recording
  std::vector<Tensor> frames;
  std::vector<std::string> target_tokens;
};

/// Frames shared between overlapping windows share one tensor.
std::vector<SeriesSample> samples_from_windows(const std::vector<FmriSeriesWindow>& windows);

/// One sample per (subject, sentence), words in index order.
std::vector<SeriesSample> samples_from_eeg(const std::vector<EegWordFeature>& features);

/// Distinct snapshots across all samples, ordered by recording then position.
std::vector<Tensor> collect_snapshots(const std::vector<SeriesSample>& samples);

/// Chunks the contiguous frame runs covered by the samples into series of
/// `length`; runs shorter than that are skipped with a warning.
std::vector<std::vector<Tensor>> build_phase2_series(const std::vector<SeriesSample>& samples, std::size_t length);

Vocabulary build_vocabulary(const std::vector<SeriesSample>& samples);

}  // namespace unicorn
