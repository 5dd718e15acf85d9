#pragma once

// Small synthetic corpora matching the tiny model configurations.

#include "unicorn/dataset.hpp"
#include "unicorn/datamodel.hpp"

namespace unicorn::testing {

/// Windows of length T over one recording of 8x8x4 volumes.
inline std::vector<SeriesSample> tiny_samples(std::size_t windows, std::size_t T, std::uint64_t seed = 5,
                                              VolumeDims dims = {8, 8, 4}) {
  SyntheticSpec spec;
  spec.n_subjects = 1;
  spec.n_stimuli = 1;
  spec.frames_per_stimulus = windows * T;
  spec.dims = dims;
  spec.vocab_size = 12;
  const auto corpus = generate_synthetic_corpus(spec, seed);
  WindowingOptions options;
  options.series_length = T;
  options.stride = T;
  options.drop_empty = false;
  const auto targets = build_all_windows(corpus.recordings, options);
  return samples_from_windows(load_windows(targets, corpus.recordings, corpus.volumes));
}

}  // namespace unicorn::testing
