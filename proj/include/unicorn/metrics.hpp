#pragma once

// BLEU and ROUGE-1 over token sequences.

#include <string>
#include <vector>

namespace unicorn {

using TokenList = std::vector<std::string>;

struct BleuOptions {
  /// Average of per-sentence scores instead of pooled corpus counts.
  bool sentence_level = false;
  /// Add-one smoothing of precisions for orders >= 2.
  bool smoothing = false;
};

/// Clipped n-gram precision for one order, pooled over the corpus.
struct NgramPrecision {
  std::size_t matched = 0;
  std::size_t total = 0;
};

NgramPrecision ngram_precision(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references,
                               std::size_t n);

/// Uniformly weighted BLEU-N with brevity penalty. Throws ValidationError on
/// an empty corpus, mismatched counts or N outside 1..4.
double bleu_n(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references, std::size_t n,
              const BleuOptions& options = {});

struct RougeScore {
  double f = 0.0;
  double p = 0.0;
  double r = 0.0;
};

/// Clipped unigram overlap; both sides empty yields zeros and a warning.
RougeScore rouge1(const TokenList& candidate, const TokenList& reference);
/// Mean of per-sample scores.
RougeScore rouge1_corpus(const std::vector<TokenList>& candidates, const std::vector<TokenList>& references);

}  // namespace unicorn
