#include <doctest.h>

#include <cmath>
#include <sstream>

#include "metric_oracle.hpp"
#include "unicorn/errors.hpp"
#include "unicorn/log.hpp"
#include "unicorn/metrics.hpp"

using namespace unicorn;

namespace {

TokenList words(const std::string& text) {
  std::istringstream in(text);
  TokenList out;
  std::string w;
  while (in >> w) out.push_back(w);
  return out;
}

}  // namespace

TEST_CASE("hand-computed BLEU examples") {
  auto same = words("the quick brown fox jumps");
  for (std::size_t n = 1; n <= 4; ++n) CHECK(bleu_n({same}, {same}, n) == 1.0);
  CHECK(bleu_n({words("a b c d")}, {words("a b x d")}, 1) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(bleu_n({words("the the the")}, {words("the cat")}, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("brevity penalty and zero precision") {
  // c=2 < r=4: BP = exp(1 - 2) and p1 = 1.
  CHECK(bleu_n({words("a b")}, {words("a b c d")}, 1) == doctest::Approx(std::exp(-1.0)));
  CHECK(bleu_n({words("a b")}, {words("c d")}, 1) == 0.0);
  // No matching bigram: BLEU-2 is exactly zero without smoothing.
  CHECK(bleu_n({words("a b")}, {words("b a")}, 2) == 0.0);
  CHECK(bleu_n({words("a b")}, {words("b a")}, 2, {false, true}) > 0.0);
  CHECK(bleu_n({TokenList{}}, {words("a")}, 1) == 0.0);
}

TEST_CASE("BLEU errors") {
  CHECK_THROWS_AS(bleu_n({}, {}, 1), ValidationError);
  CHECK_THROWS_AS(bleu_n({words("a")}, {}, 1), ValidationError);
  CHECK_THROWS_AS(bleu_n({words("a")}, {words("a")}, 5), ValidationError);
  CHECK_THROWS_AS(bleu_n({words("a")}, {words("a")}, 0), ValidationError);
}

TEST_CASE("sentence-level BLEU averages per-pair scores") {
  std::vector<TokenList> c = {words("a b c d"), words("x y")};
  std::vector<TokenList> r = {words("a b x d"), words("x y")};
  CHECK(bleu_n(c, r, 1, {true, false}) == doctest::Approx((0.75 + 1.0) / 2.0));
}

TEST_CASE("hand-computed ROUGE-1 examples") {
  auto s = rouge1(words("a b"), words("a c d"));
  CHECK(s.p == doctest::Approx(0.5));
  CHECK(s.r == doctest::Approx(1.0 / 3.0));
  CHECK(s.f == doctest::Approx(0.4));
  auto same = rouge1(words("x y z"), words("x y z"));
  CHECK(same.f == 1.0);
  CHECK(same.p == 1.0);
  CHECK(same.r == 1.0);
  auto disjoint = rouge1(words("a b"), words("c d"));
  CHECK(disjoint.f == 0.0);
  const auto before = log::warning_count();
  auto empty = rouge1({}, {});
  CHECK(empty.f == 0.0);
  CHECK(log::warning_count() == before + 1);
}

TEST_CASE("metrics agree with the brute-force oracle") {
  Rng rng(2024);
  for (int trial = 0; trial < 200; ++trial) {
    auto [cands, refs] = oracle::random_corpus(rng);
    for (std::size_t n = 1; n <= 4; ++n) CHECK(std::abs(bleu_n(cands, refs, n) - oracle::corpus_bleu(cands, refs, n)) <= 1e-9);
    for (std::size_t i = 0; i < cands.size(); ++i) {
      if (cands[i].empty() && refs[i].empty()) continue;
      auto a = rouge1(cands[i], refs[i]);
      auto b = oracle::rouge1(cands[i], refs[i]);
      CHECK(std::abs(a.f - b.f) <= 1e-9);
      CHECK(std::abs(a.p - b.p) <= 1e-9);
      CHECK(std::abs(a.r - b.r) <= 1e-9);
    }
  }
}

TEST_CASE("BLEU-N is non-increasing in N while precisions are non-increasing") {
  Rng rng(77);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    auto [cands, refs] = oracle::random_corpus(rng);
    double previous_precision = 2.0;
    double previous_bleu = 2.0;
    for (std::size_t n = 1; n <= 4; ++n) {
      auto p = ngram_precision(cands, refs, n);
      if (p.matched == 0) break;
      const double precision = static_cast<double>(p.matched) / static_cast<double>(p.total);
      if (precision > previous_precision) break;
      const double bleu = bleu_n(cands, refs, n);
      CHECK(bleu <= previous_bleu + 1e-12);
      previous_bleu = bleu;
      previous_precision = precision;
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("pooled precisions can rise with N on multi-sentence corpora") {
  // A one-token miss adds to the unigram pool only, so p2 > p1 and BLEU-2 > BLEU-1.
  std::vector<TokenList> c = {words("x"), words("a b")};
  std::vector<TokenList> r = {words("y"), words("a b")};
  CHECK(bleu_n(c, r, 1) == doctest::Approx(2.0 / 3.0));
  CHECK(bleu_n(c, r, 2) == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(bleu_n(c, r, 2) > bleu_n(c, r, 1));
}

TEST_CASE("rouge corpus score is the per-sample mean") {
  auto s = rouge1_corpus({words("a b"), words("x y z")}, {words("a c d"), words("x y z")});
  CHECK(s.f == doctest::Approx((0.4 + 1.0) / 2.0));
  CHECK_THROWS_AS(rouge1_corpus({}, {}), ValidationError);
}
