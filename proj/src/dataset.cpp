#include "unicorn/dataset.hpp"

#include <algorithm>
#include <map>

#include "unicorn/errors.hpp"
#include "unicorn/log.hpp"
#include "unicorn/models.hpp"

namespace unicorn {

std::vector<SeriesSample> samples_from_windows(const std::vector<FmriSeriesWindow>& windows) {
  std::map<const FmriVolume*, Tensor> converted;
  std::vector<SeriesSample> out;
  out.reserve(windows.size());
  for (const auto& w : windows) {
    SeriesSample s;
    s.key = w.key();
    s.id = s.key.to_string();
    s.recording = w.subject_id + "/" + w.stimulus_id;
    s.first_index = w.start_index;
    s.target_tokens = w.target_tokens;
    for (const auto& frame : w.frames) {
      auto [it, inserted] = converted.try_emplace(frame.get());
      if (inserted) it->second = volume_to_tensor(*frame);
      s.frames.push_back(it->second);
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SeriesSample> samples_from_eeg(const std::vector<EegWordFeature>& features) {
  std::map<std::pair<std::string, std::string>, std::vector<const EegWordFeature*>> sentences;
  std::size_t dim = 0;
  for (const auto& f : features) {
    if (dim == 0) dim = f.features.size();
    if (f.features.size() != dim) throw ValidationError("EEG feature dimension differs across the corpus");
    sentences[{f.subject_id, f.sentence_id}].push_back(&f);
  }
  std::vector<SeriesSample> out;
  for (auto& [key, words] : sentences) {
    std::stable_sort(words.begin(), words.end(),
                     [](const EegWordFeature* a, const EegWordFeature* b) { return a->word_index < b->word_index; });
    SeriesSample s;
    s.recording = key.first + "/" + key.second;
    s.id = s.recording;
    s.key = {key.first, key.second, 0, words.size()};
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i > 0 && words[i]->word_index == words[i - 1]->word_index)
        throw ValidationError("duplicate word index in " + s.recording);
      s.frames.push_back(eeg_to_tensor(*words[i]));
      for (auto& t : tokenize(words[i]->word)) s.target_tokens.push_back(std::move(t));
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

/// recording -> position -> frame, over every sample.
std::map<std::string, std::map<std::size_t, Tensor>> index_frames(const std::vector<SeriesSample>& samples) {
  std::map<std::string, std::map<std::size_t, Tensor>> out;
  for (const auto& s : samples)
    for (std::size_t t = 0; t < s.frames.size(); ++t) out[s.recording].try_emplace(s.first_index + t, s.frames[t]);
  return out;
}

}  // namespace

std::vector<Tensor> collect_snapshots(const std::vector<SeriesSample>& samples) {
  std::vector<Tensor> out;
  for (const auto& [recording, frames] : index_frames(samples))
    for (const auto& [index, frame] : frames) out.push_back(frame);
  return out;
}

std::vector<std::vector<Tensor>> build_phase2_series(const std::vector<SeriesSample>& samples, std::size_t length) {
  if (length == 0) throw ValidationError("phase-2 series length must be positive");
  std::vector<std::vector<Tensor>> out;
  for (const auto& [recording, frames] : index_frames(samples)) {
    std::vector<Tensor> run;
    std::size_t previous = 0;
    auto flush = [&] {
      if (run.empty()) return;
      if (run.size() < length) {
        log::warn("phase 2: skipping a run of " + std::to_string(run.size()) + " frames in " + recording +
                  " (series length " + std::to_string(length) + ")");
      }
      for (std::size_t start = 0; start + length <= run.size(); start += length)
        out.emplace_back(run.begin() + static_cast<std::ptrdiff_t>(start),
                         run.begin() + static_cast<std::ptrdiff_t>(start + length));
      run.clear();
    };
    for (const auto& [index, frame] : frames) {
      if (!run.empty() && index != previous + 1) flush();
      run.push_back(frame);
      previous = index;
    }
    flush();
  }
  return out;
}

Vocabulary build_vocabulary(const std::vector<SeriesSample>& samples) {
  std::vector<std::vector<std::string>> sentences;
  sentences.reserve(samples.size());
  for (const auto& s : samples) sentences.push_back(s.target_tokens);
  return Vocabulary::build(sentences);
}

}  // namespace unicorn
