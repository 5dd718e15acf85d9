#pragma once

// Slow reference implementations of BLEU and ROUGE-1 for cross-checking.
// They scan token positions directly instead of building n-gram maps.

#include <cmath>
#include <string>
#include <vector>

#include "unicorn/rng.hpp"

namespace unicorn::oracle {

using Tokens = std::vector<std::string>;

inline bool same_gram(const Tokens& a, std::size_t i, const Tokens& b, std::size_t j, std::size_t n) {
  for (std::size_t t = 0; t < n; ++t)
    if (a[i + t] != b[j + t]) return false;
  return true;
}

inline std::size_t occurrences(const Tokens& seq, const Tokens& gram_src, std::size_t at, std::size_t n) {
  std::size_t c = 0;
  for (std::size_t j = 0; j + n <= seq.size(); ++j) c += same_gram(seq, j, gram_src, at, n);
  return c;
}

/// Matched and total n-gram counts for one sentence pair.
inline std::pair<double, double> clipped(const Tokens& cand, const Tokens& ref, std::size_t n) {
  double matched = 0.0, total = 0.0;
  for (std::size_t i = 0; i + n <= cand.size(); ++i) {
    total += 1.0;
    // Count each distinct gram once, at its first occurrence.
    bool first = true;
    for (std::size_t k = 0; k < i; ++k)
      if (same_gram(cand, k, cand, i, n)) first = false;
    if (!first) continue;
    const double in_cand = static_cast<double>(occurrences(cand, cand, i, n));
    const double in_ref = static_cast<double>(occurrences(ref, cand, i, n));
    matched += in_cand < in_ref ? in_cand : in_ref;
  }
  return {matched, total};
}

inline double corpus_bleu(const std::vector<Tokens>& cands, const std::vector<Tokens>& refs, std::size_t N) {
  double product = 1.0, c = 0.0, r = 0.0;
  for (std::size_t n = 1; n <= N; ++n) {
    double m = 0.0, t = 0.0;
    for (std::size_t s = 0; s < cands.size(); ++s) {
      auto [mm, tt] = clipped(cands[s], refs[s], n);
      m += mm;
      t += tt;
    }
    if (t == 0.0) return 0.0;
    product *= m / t;
  }
  for (std::size_t s = 0; s < cands.size(); ++s) {
    c += static_cast<double>(cands[s].size());
    r += static_cast<double>(refs[s].size());
  }
  if (c == 0.0) return 0.0;
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::pow(product, 1.0 / static_cast<double>(N));
}

struct Rouge {
  double f, p, r;
};

inline Rouge rouge1(const Tokens& cand, const Tokens& ref) {
  auto [overlap, total] = clipped(cand, ref, 1);
  (void)total;
  const double p = cand.empty() ? 0.0 : overlap / static_cast<double>(cand.size());
  const double r = ref.empty() ? 0.0 : overlap / static_cast<double>(ref.size());
  return {p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0, p, r};
}

/// Random corpus over a small alphabet so n-gram collisions are common.
inline std::pair<std::vector<Tokens>, std::vector<Tokens>> random_corpus(Rng& rng) {
  const std::size_t sentences = 1 + rng.index(6);
  const std::size_t alphabet = 2 + rng.index(5);
  std::vector<Tokens> cands, refs;
  auto sentence = [&] {
    Tokens s(rng.index(9));
    for (auto& t : s) t = std::string(1, static_cast<char>('a' + rng.index(alphabet)));
    return s;
  };
  for (std::size_t i = 0; i < sentences; ++i) {
    cands.push_back(sentence());
    refs.push_back(sentence());
  }
  return {cands, refs};
}

}  // namespace unicorn::oracle
