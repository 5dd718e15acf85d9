#include "unicorn/evaluation.hpp"

#include <algorithm>
#include <cstdio>

#include "unicorn/errors.hpp"

namespace unicorn {

using json = nlohmann::ordered_json;

std::vector<std::size_t> truncate_at_eos(const std::vector<std::size_t>& ids) {
  auto it = std::find(ids.begin(), ids.end(), Vocabulary::kEos);
  return {ids.begin(), it};
}

EvalReport evaluate(const ModelBundle& bundle, const std::vector<SeriesSample>& samples, const EvalOptions& options) {
  if (!bundle.completed_phases().count(3))
    throw MissingPrerequisiteError("evaluation needs a model that completed phase 3");
  if (samples.empty()) throw ValidationError("evaluation set is empty");

  NoGradGuard no_grad;
  EvalReport report;
  report.decode = options.decode;
  std::vector<int> phases(bundle.completed_phases().begin(), bundle.completed_phases().end());
  report.provenance = {{"ablation", to_string(bundle.ablation())}, {"completed_phases", phases}};

  const Vocabulary& vocab = bundle.vocabulary();
  std::vector<TokenList> candidates, references;
  std::size_t correct = 0, total = 0;
  for (const auto& s : samples) {
    std::vector<std::size_t> gold = vocab.encode(s.target_tokens);
    std::vector<std::size_t> targets = gold;
    targets.push_back(Vocabulary::kEos);
    const Tensor memory = bundle.embed(s.frames);
    std::optional<std::vector<std::size_t>> prefix;
    if (options.decode.mode == DecodeMode::teacher_forced) prefix = gold;
    DecodeResult r = decode_text(bundle.text_decoder(), memory, prefix, options.decode);

    EvalRecord rec;
    rec.id = s.id;
    rec.gold = s.target_tokens;
    rec.predicted = vocab.decode(truncate_at_eos(r.predicted));
    rec.total_tokens = targets.size();
    for (std::size_t t = 0; t < targets.size() && t < r.predicted.size(); ++t)
      rec.correct_tokens += r.predicted[t] == targets[t];
    correct += rec.correct_tokens;
    total += rec.total_tokens;
    candidates.push_back(rec.predicted);
    references.push_back(rec.gold);
    report.records.push_back(std::move(rec));
  }
  for (std::size_t n = 1; n <= 4; ++n) report.scores.bleu[n - 1] = bleu_n(candidates, references, n, options.bleu);
  report.scores.rouge = rouge1_corpus(candidates, references);
  report.scores.token_accuracy = static_cast<double>(correct) / static_cast<double>(total);
  return report;
}

namespace {

json scores_json(const EvalScores& s) {
  return {{"bleu1", s.bleu[0]},      {"bleu2", s.bleu[1]},        {"bleu3", s.bleu[2]},
          {"bleu4", s.bleu[3]},      {"rouge1_f", s.rouge.f},     {"rouge1_p", s.rouge.p},
          {"rouge1_r", s.rouge.r},   {"token_accuracy", s.token_accuracy}};
}

EvalScores scores_from_json(const json& j) {
  EvalScores s;
  s.bleu = {j.at("bleu1").get<double>(), j.at("bleu2").get<double>(), j.at("bleu3").get<double>(),
            j.at("bleu4").get<double>()};
  s.rouge = {j.at("rouge1_f").get<double>(), j.at("rouge1_p").get<double>(), j.at("rouge1_r").get<double>()};
  s.token_accuracy = j.at("token_accuracy").get<double>();
  return s;
}

std::string percent(double v) {
  char buffer[32];
  std::snprintf(buffer, sizeof buffer, "%.2f", 100.0 * v);
  return buffer;
}

}  // namespace

std::string EvalReport::to_json() const {
  json records_json = json::array();
  for (const auto& r : records)
    records_json.push_back({{"id", r.id},
                            {"gold", r.gold},
                            {"predicted", r.predicted},
                            {"correct_tokens", r.correct_tokens},
                            {"total_tokens", r.total_tokens}});
  json doc{{"decode",
            {{"mode", to_string(decode.mode)}, {"beam_width", decode.beam_width}, {"max_length", decode.max_length}}},
           {"scores", scores_json(scores)},
           {"record_count", records.size()},
           {"provenance", provenance},
           {"config", config},
           {"records", records_json}};
  return doc.dump(1) + "\n";
}

EvalReport EvalReport::from_json(std::string_view text) {
  EvalReport r;
  try {
    const json doc = json::parse(text);
    const auto& d = doc.at("decode");
    r.decode = {parse_decode_mode(d.at("mode").get<std::string>()), d.at("beam_width").get<std::size_t>(),
                d.at("max_length").get<std::size_t>()};
    r.scores = scores_from_json(doc.at("scores"));
    r.provenance = doc.at("provenance");
    r.config = doc.at("config");
    for (const auto& rec : doc.at("records"))
      r.records.push_back({rec.at("id").get<std::string>(), rec.at("gold").get<TokenList>(),
                           rec.at("predicted").get<TokenList>(), rec.at("correct_tokens").get<std::size_t>(),
                           rec.at("total_tokens").get<std::size_t>()});
  } catch (const json::exception& e) {
    throw FormatError(std::string("eval report: ") + e.what());
  }
  return r;
}

std::string EvalReport::render() const {
  return render_table("Evaluation (" + to_string(decode.mode) + ", " + std::to_string(records.size()) + " windows)",
                      "set", {{"all", scores}}) +
         "token accuracy: " + percent(scores.token_accuracy) + "\n";
}

std::string render_table(const std::string& title, const std::string& row_header, const std::vector<TableRow>& rows) {
  const std::vector<std::string> columns{"BLEU-1", "BLEU-2", "BLEU-3", "BLEU-4", "R1-F", "R1-P", "R1-R"};
  std::size_t label_width = row_header.size();
  for (const auto& r : rows) label_width = std::max(label_width, r.label.size());
  const std::size_t col_width = 8;

  auto pad_right = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  auto pad_left = [](const std::string& s, std::size_t w) { return std::string(w > s.size() ? w - s.size() : 0, ' ') + s; };

  std::string out = title + "\n";
  std::string header = pad_right(row_header, label_width);
  for (const auto& c : columns) header += " " + pad_left(c, col_width);
  out += header + "\n" + std::string(header.size(), '-') + "\n";
  for (const auto& r : rows) {
    std::string line = pad_right(r.label, label_width);
    const auto& s = r.scores;
    for (double v : {s.bleu[0], s.bleu[1], s.bleu[2], s.bleu[3], s.rouge.f, s.rouge.p, s.rouge.r})
      line += " " + pad_left(percent(v), col_width);
    out += line + "\n";
  }
  return out;
}

}  // namespace unicorn
