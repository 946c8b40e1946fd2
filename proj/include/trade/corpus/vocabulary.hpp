#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "trade/corpus/corpus.hpp"

namespace trade::corpus {

/// Token <-> id bijection. Ids 0..5 are reserved and fixed:
/// <pad> <unk> <sos> <eos> dontcare none.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kSos = 2;
  static constexpr std::size_t kEos = 3;
  static constexpr std::size_t kDontcare = 4;
  static constexpr std::size_t kNone = 5;
  static constexpr std::size_t kReservedCount = 6;
  static const std::array<std::string, kReservedCount>& reserved();

  Vocabulary();
  /// Full token list, reserved tokens first. Throws ConfigError if the
  /// reserved prefix is wrong or a token repeats.
  explicit Vocabulary(std::vector<std::string> tokens);

  /// Every utterance and value token with frequency >= min_freq, appended
  /// after the reserved ids in lexicographic order.
  static Vocabulary build(const Corpus& corpus, std::size_t min_freq = 1);

  std::size_t size() const { return tokens_.size(); }
  std::optional<std::size_t> find(const std::string& token) const;
  /// Id of `token`, or kUnk.
  std::size_t id(const std::string& token) const;
  const std::string& token(std::size_t id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// FNV-1a over the ordered token list; checkpoints pin it.
  std::uint64_t hash() const;

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace trade::corpus
