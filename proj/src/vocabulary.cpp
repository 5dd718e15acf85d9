#include "unicorn/vocabulary.hpp"

#include "unicorn/errors.hpp"

namespace unicorn {

namespace {
const std::vector<std::string> kSpecials = {"<pad>", "<bos>", "<eos>", "<unk>"};
}

Vocabulary::Vocabulary() {
  for (const auto& s : kSpecials) add(s);
}

Vocabulary Vocabulary::build(const std::vector<std::vector<std::string>>& sentences) {
  Vocabulary vocab;
  for (const auto& sentence : sentences)
    for (const auto& token : sentence) vocab.add(token);
  return vocab;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kSpecialCount) throw FormatError("vocabulary: missing special tokens");
  for (std::size_t i = 0; i < kSpecialCount; ++i) {
    if (tokens[i] != kSpecials[i]) throw FormatError("vocabulary: special token " + std::to_string(i) + " out of place");
  }
  Vocabulary vocab;
  for (std::size_t i = kSpecialCount; i < tokens.size(); ++i) {
    if (vocab.contains(tokens[i])) throw FormatError("vocabulary: duplicate token '" + tokens[i] + "'");
    vocab.add(tokens[i]);
  }
  return vocab;
}

std::size_t Vocabulary::add(const std::string& token) {
  if (auto it = index_.find(token); it != index_.end()) return it->second;
  const std::size_t id = tokens_.size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const { return index_.count(token) != 0; }

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) throw ValidationError("vocabulary: id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<std::size_t> Vocabulary::encode(const std::vector<std::string>& words) const {
  std::vector<std::size_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  std::vector<std::string> words;
  for (auto i : ids)
    if (i != kPad && i != kBos && i != kEos) words.push_back(token(i));
  return words;
}

}  // namespace unicorn
