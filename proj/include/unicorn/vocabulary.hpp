#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace unicorn {

/// Token <-> id bijection with fixed ids for the special tokens.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kSpecialCount = 4;

  Vocabulary();

  /// Builds from a token stream; ordinary tokens are ordered by first
  /// appearance so the result is deterministic.
  static Vocabulary build(const std::vector<std::vector<std::string>>& sentences);
  /// Restores from the full ordered token list (specials included).
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  std::size_t add(const std::string& token);
  std::size_t id(const std::string& token) const;  // unk for unknown tokens
  bool contains(const std::string& token) const;
  const std::string& token(std::size_t id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

  std::vector<std::size_t> encode(const std::vector<std::string>& words) const;
  /// Drops pad/bos/eos; unknown ids stay visible as <unk>.
  std::vector<std::string> decode(const std::vector<std::size_t>& ids) const;

  static bool is_special(std::size_t id) { return id < kSpecialCount; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace unicorn
