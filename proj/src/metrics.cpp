#include "unicorn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "unicorn/errors.hpp"
#include "unicorn/log.hpp"

namespace unicorn {

namespace {

using Counts = std::map<std::vector<std::string>, std::size_t>;

Counts count_ngrams(const TokenList& tokens, std::size_t n) {
  Counts out;
  if (tokens.size() < n) return out;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) ++out[TokenList(tokens.begin() + i, tokens.begin() + i + n)];
  return out;
}

NgramPrecision sentence_precision(const TokenList& candidate, const TokenList& reference, std::size_t n) {
  NgramPrecision p;
  const auto cand = count_ngrams(candidate, n);
  const auto ref = count_ngrams(reference, n);
  for (const auto& [gram, count] : cand) {
    p.total += count;
    auto it = ref.find(gram);
    if (it != ref.end()) p.matched += std::min(count, it->second);
  }
  return p;
}

void check_corpus(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references) {
  if (candidates.empty()) throw ValidationError("BLEU: empty corpus");
  if (candidates.size() != references.size())
    throw ValidationError("BLEU: " + std::to_string(candidates.size()) + " candidates vs " +
                          std::to_string(references.size()) + " references");
}

double combine(const std::vector<NgramPrecision>& precisions, std::size_t cand_len, std::size_t ref_len,
               bool smoothing) {
  if (cand_len == 0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t k = 0; k < precisions.size(); ++k) {
    double matched = static_cast<double>(precisions[k].matched);
    double total = static_cast<double>(precisions[k].total);
    if (smoothing && k > 0) {
      matched += 1.0;
      total += 1.0;
    }
    if (matched == 0.0 || total == 0.0) return 0.0;
    log_sum += std::log(matched / total);
  }
  const double bp =
      cand_len < ref_len ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(cand_len)) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(precisions.size()));
}

}  // namespace

NgramPrecision ngram_precision(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
                               std::size_t n) {
  check_corpus(candidates, references);
  NgramPrecision total;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto p = sentence_precision(candidates[i], references[i], n);
    total.matched += p.matched;
    total.total += p.total;
  }
  return total;
}

double bleu_n(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references, std::size_t n,
              const BleuOptions& options) {
  check_corpus(candidates, references);
  if (n < 1 || n > 4) throw ValidationError("BLEU order must be in 1..4, got " + std::to_string(n));

  if (options.sentence_level) {
    double sum = 0.0;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      std::vector<NgramPrecision> precisions;
      for (std::size_t k = 1; k <= n; ++k) precisions.push_back(sentence_precision(candidates[i], references[i], k));
      sum += combine(precisions, candidates[i].size(), references[i].size(), options.smoothing);
    }
    return sum / static_cast<double>(candidates.size());
  }

  std::vector<NgramPrecision> precisions;
  for (std::size_t k = 1; k <= n; ++k) precisions.push_back(ngram_precision(candidates, references, k));
  std::size_t cand_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    cand_len += candidates[i].size();
    ref_len += references[i].size();
  }
  return combine(precisions, cand_len, ref_len, options.smoothing);
}

RougeScore rouge1(const TokenList& candidate, const TokenList& reference) {
  if (candidate.empty() && reference.empty()) {
    log::warn("ROUGE-1: candidate and reference are both empty; scoring 0");
    return {};
  }
  const auto overlap = static_cast<double>(sentence_precision(candidate, reference, 1).matched);
  RougeScore s;
  s.p = candidate.empty() ? 0.0 : overlap / static_cast<double>(candidate.size());
  s.r = reference.empty() ? 0.0 : overlap / static_cast<double>(reference.size());
  s.f = s.p + s.r > 0.0 ? 2.0 * s.p * s.r / (s.p + s.r) : 0.0;
  return s;
}

RougeScore rouge1_corpus(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references) {
  if (candidates.size() != references.size()) throw ValidationError("ROUGE-1: candidate/reference count mismatch");
  if (candidates.empty()) throw ValidationError("ROUGE-1: empty corpus");
  RougeScore mean;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    auto s = rouge1(candidates[i], references[i]);
    mean.f += s.f;
    mean.p += s.p;
    mean.r += s.r;
  }
  const auto n = static_cast<double>(candidates.size());
  return {mean.f / n, mean.p / n, mean.r / n};
}

}  // namespace unicorn
