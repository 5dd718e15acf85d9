#include <doctest.h>

#include <map>

#include "tiny_configs.hpp"
#include "unicorn/errors.hpp"
#include "unicorn/evaluation.hpp"

using namespace unicorn;

namespace {

/// Scores the gold token of each position highly; the sample is identified by
/// its number of memory rows. With `miss_first`, position 0 predicts a wrong
/// token instead.
class ScriptedDecoder : public TextDecoder {
 public:
  ScriptedDecoder(std::map<std::size_t, std::vector<std::size_t>> gold, std::size_t dim, std::size_t vocab,
                  bool miss_first)
      : gold_(std::move(gold)), dim_(dim), vocab_(vocab), miss_first_(miss_first) {}

  Tensor logits(const Tensor& memory, std::span<const std::size_t> input_ids) const override {
    const auto& gold = gold_.at(memory.dim(0));
    std::vector<double> values(input_ids.size() * vocab_, 0.0);
    for (std::size_t i = 0; i < input_ids.size(); ++i) {
      std::size_t target = i < gold.size() ? gold[i] : Vocabulary::kEos;
      if (miss_first_ && i == 0) target = Vocabulary::kUnk;
      values[i * vocab_ + target] = 10.0;
    }
    return Tensor::from({input_ids.size(), vocab_}, std::move(values));
  }
  nn::ParameterList parameters() const override { return {}; }
  std::size_t model_dim() const override { return dim_; }
  std::size_t vocab_size() const override { return vocab_; }

 private:
  std::map<std::size_t, std::vector<std::size_t>> gold_;
  std::size_t dim_, vocab_;
  bool miss_first_;
};

struct Fixture {
  ModelBundle bundle{testing::tiny_fmri_config(), testing::tiny_vocabulary(6), 2};
  std::vector<SeriesSample> samples;

  explicit Fixture(bool miss_first = false) {
    const std::vector<std::vector<std::string>> sentences{{"w0", "w1", "w2"}, {"w3", "w3"}, {"w4", "w5", "w0", "w1"}};
    std::map<std::size_t, std::vector<std::size_t>> gold;
    Rng rng(4);
    for (std::size_t i = 0; i < sentences.size(); ++i) {
      SeriesSample s;
      s.key = {"sub", "stim", i * 10, i + 1};
      s.id = s.key.to_string();
      for (std::size_t t = 0; t <= i; ++t)
        s.frames.push_back(testing::random_signal(bundle.config().signal_shape(), rng));
      s.target_tokens = sentences[i];
      gold[i + 1] = bundle.vocabulary().encode(sentences[i]);
      samples.push_back(std::move(s));
    }
    bundle.set_text_decoder(std::make_unique<ScriptedDecoder>(gold, bundle.config().decoder_dim,
                                                              bundle.vocabulary().size(), miss_first));
    bundle.set_completed_phases({1, 2, 3});
  }
};

}  // namespace

TEST_CASE("truncate_at_eos") {
  CHECK(truncate_at_eos({5, 6, Vocabulary::kEos, 7}) == std::vector<std::size_t>{5, 6});
  CHECK(truncate_at_eos({5, 6}) == std::vector<std::size_t>{5, 6});
  CHECK(truncate_at_eos({Vocabulary::kEos}).empty());
}

TEST_CASE("evaluate requires a bundle that completed phase 3") {
  Fixture f;
  f.bundle.set_completed_phases({1, 2});
  CHECK_THROWS_AS(evaluate(f.bundle, f.samples, {}), MissingPrerequisiteError);
  f.bundle.set_completed_phases({1, 2, 3});
  CHECK_THROWS_AS(evaluate(f.bundle, {}, {}), ValidationError);
}

TEST_CASE("perfect teacher-forced predictions score 100 on every metric") {
  Fixture f;
  for (DecodeMode mode : {DecodeMode::teacher_forced, DecodeMode::greedy, DecodeMode::beam}) {
    EvalOptions options;
    options.decode.mode = mode;
    const EvalReport r = evaluate(f.bundle, f.samples, options);
    CHECK(r.records.size() == f.samples.size());
    CHECK(r.scores.token_accuracy == 1.0);
    for (double b : r.scores.bleu) CHECK(b == doctest::Approx(1.0));
    CHECK(r.scores.rouge.f == doctest::Approx(1.0));
    CHECK(r.scores.rouge.p == doctest::Approx(1.0));
    CHECK(r.scores.rouge.r == doctest::Approx(1.0));
    for (const auto& rec : r.records) CHECK(rec.predicted == rec.gold);
    CHECK(r.render().find("100.00") != std::string::npos);
  }
}

TEST_CASE("token accuracy counts gold and eos positions") {
  Fixture f(true);
  const EvalReport r = evaluate(f.bundle, f.samples, {});
  // each sentence of n tokens misses only position 0 out of n + 1 targets
  CHECK(r.records[0].correct_tokens == 3);
  CHECK(r.records[0].total_tokens == 4);
  CHECK(r.records[2].correct_tokens == 4);
  CHECK(r.records[2].total_tokens == 5);
  CHECK(r.scores.token_accuracy == doctest::Approx(9.0 / 12.0));
  CHECK(r.records[0].predicted == TokenList{"<unk>", "w1", "w2"});
}

TEST_CASE("evaluation is deterministic and its report round-trips") {
  Fixture f(true);
  EvalOptions options;
  options.decode.mode = DecodeMode::greedy;
  const EvalReport a = evaluate(f.bundle, f.samples, options);
  const EvalReport b = evaluate(f.bundle, f.samples, options);
  CHECK(a.to_json() == b.to_json());

  EvalReport with_config = a;
  with_config.config = {{"seed", "1"}};
  const EvalReport back = EvalReport::from_json(with_config.to_json());
  CHECK(back.to_json() == with_config.to_json());
  CHECK(back.decode.mode == DecodeMode::greedy);
  CHECK(back.records.size() == a.records.size());
  CHECK_THROWS_AS(EvalReport::from_json("{\"decode\": 3}"), FormatError);
}

TEST_CASE("render_table prints percentages with two decimals") {
  EvalScores s;
  s.bleu = {0.5, 0.25, 0.125, 0.0625};
  s.rouge = {0.4, 0.5, 1.0 / 3.0};
  const std::string table = render_table("Title", "T", {{"1", s}, {"16", s}});
  CHECK(table.rfind("Title\n", 0) == 0);
  CHECK(table.find("BLEU-1") != std::string::npos);
  CHECK(table.find("R1-F") != std::string::npos);
  CHECK(table.find("50.00") != std::string::npos);
  CHECK(table.find("6.25") != std::string::npos);
  CHECK(table.find("33.33") != std::string::npos);
  CHECK(table.find("\n16 ") != std::string::npos);
}
