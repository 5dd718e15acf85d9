#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>

#include "unicorn/datamodel.hpp"
#include "unicorn/errors.hpp"
#include "unicorn/log.hpp"

namespace unicorn {

std::string WindowKey::to_string() const {
  return subject_id + "/" + stimulus_id + "@" + std::to_string(start_index) + "+" + std::to_string(series_length);
}

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

std::vector<std::vector<std::string>> align_words_to_frames(const RecordingMeta& meta, double lag_sec) {
  if (!(meta.tr_seconds > 0.0)) throw ValidationError("align: tr_seconds must be > 0");
  if (meta.n_frames == 0 && !meta.transcript.empty())
    throw ValidationError("align: recording has words but no frames");
  std::vector<std::vector<std::string>> frames(meta.n_frames);
  const auto last = static_cast<double>(meta.n_frames) - 1.0;
  for (const auto& w : meta.transcript) {
    const double raw = std::floor((w.onset_sec + lag_sec) / meta.tr_seconds);
    const double clamped = std::clamp(raw, 0.0, last);
    frames[static_cast<std::size_t>(clamped)].push_back(w.word);
  }
  return frames;
}

std::vector<WindowTarget> build_windows(const RecordingMeta& meta,
                                        const std::vector<std::vector<std::string>>& alignment,
                                        std::size_t series_length, std::size_t stride, bool drop_empty) {
  if (series_length == 0) throw ValidationError("build_windows: series length must be >= 1");
  if (stride == 0) throw ValidationError("build_windows: stride must be >= 1");
  if (alignment.size() != meta.n_frames) throw ValidationError("build_windows: alignment does not cover every frame");
  std::vector<WindowTarget> windows;
  if (series_length > meta.n_frames) {
    log::warn("build_windows: series length " + std::to_string(series_length) + " exceeds " +
              std::to_string(meta.n_frames) + " frames of " + meta.subject_id + "/" + meta.stimulus_id);
    return windows;
  }
  for (std::size_t k = 0; k + series_length <= meta.n_frames; k += stride) {
    WindowTarget w{{meta.subject_id, meta.stimulus_id, k, series_length}, {}};
    for (std::size_t t = k; t < k + series_length; ++t)
      w.target_tokens.insert(w.target_tokens.end(), alignment[t].begin(), alignment[t].end());
    if (drop_empty && w.target_tokens.empty()) continue;
    windows.push_back(std::move(w));
  }
  return windows;
}

std::vector<WindowTarget> build_all_windows(const std::vector<RecordingMeta>& recordings,
                                            const WindowingOptions& options) {
  const std::size_t stride = options.stride == 0 ? options.series_length : options.stride;
  std::vector<WindowTarget> all;
  for (const auto& meta : recordings) {
    auto alignment = align_words_to_frames(meta, options.lag_sec);
    auto windows = build_windows(meta, alignment, options.series_length, stride, options.drop_empty);
    std::move(windows.begin(), windows.end(), std::back_inserter(all));
  }
  return all;
}

std::shared_ptr<const FmriVolume> DiskVolumeSource::load(const std::string& path) const {
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(path); it != cache_.end()) return it->second;
  }
  auto volume = std::make_shared<const FmriVolume>(read_volume(base_ / path));
  std::lock_guard lock(mutex_);
  return cache_.emplace(path, std::move(volume)).first->second;
}

void MemoryVolumeSource::add(const std::string& path, FmriVolume volume) {
  volumes_[path] = std::make_shared<const FmriVolume>(std::move(volume));
}

std::shared_ptr<const FmriVolume> MemoryVolumeSource::load(const std::string& path) const {
  auto it = volumes_.find(path);
  if (it == volumes_.end()) throw ValidationError("no volume registered for " + path);
  return it->second;
}

std::vector<FmriSeriesWindow> load_windows(const std::vector<WindowTarget>& targets,
                                           const std::vector<RecordingMeta>& recordings,
                                           const VolumeSource& source) {
  std::map<std::pair<std::string, std::string>, const RecordingMeta*> by_id;
  for (const auto& r : recordings) by_id[{r.subject_id, r.stimulus_id}] = &r;

  std::vector<FmriSeriesWindow> windows;
  windows.reserve(targets.size());
  std::optional<VolumeDims> dims;
  for (const auto& target : targets) {
    auto it = by_id.find({target.key.subject_id, target.key.stimulus_id});
    if (it == by_id.end()) throw ValidationError("window " + target.key.to_string() + " has no recording");
    const RecordingMeta& meta = *it->second;
    if (target.key.start_index + target.key.series_length > meta.n_frames)
      throw ValidationError("window " + target.key.to_string() + " runs past the recording");
    FmriSeriesWindow w;
    w.subject_id = target.key.subject_id;
    w.stimulus_id = target.key.stimulus_id;
    w.start_index = target.key.start_index;
    w.series_length = target.key.series_length;
    w.target_tokens = target.target_tokens;
    for (std::size_t t = 0; t < w.series_length; ++t) {
      const std::size_t k = w.start_index + t;
      auto raw = source.load(meta.volume_paths[k]);
      if (!dims) dims = raw->dims;
      if (raw->dims != *dims) throw ValidationError("volume " + meta.volume_paths[k] + " has inconsistent dims");
      if (raw->subject_id == meta.subject_id && raw->stimulus_id == meta.stimulus_id && raw->frame_index == k) {
        w.frames.push_back(raw);
      } else {
        auto tagged = std::make_shared<FmriVolume>(*raw);
        tagged->subject_id = meta.subject_id;
        tagged->stimulus_id = meta.stimulus_id;
        tagged->frame_index = k;
        w.frames.push_back(std::move(tagged));
      }
    }
    windows.push_back(std::move(w));
  }
  return windows;
}

}  // namespace unicorn
