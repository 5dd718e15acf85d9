#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace unicorn {

/// Seeded generator with distribution code written out by hand, so draws are
/// identical across standard library implementations. The engine state can be
/// serialized and restored to resume a run.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal();

  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = index(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::string state() const;
  void restore(const std::string& state);

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Mixes a base seed with a stream tag so independent consumers (phases,
/// splits, initializers) draw from decorrelated sequences.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace unicorn
