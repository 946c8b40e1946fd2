#include "trade/corpus/vocabulary.hpp"

#include <algorithm>
#include <map>

#include "trade/errors.hpp"

namespace trade::corpus {

const std::array<std::string, Vocabulary::kReservedCount>& Vocabulary::reserved() {
  static const std::array<std::string, kReservedCount> r = {"<pad>", "<unk>", "<sos>", kEosToken, kDontcareValue,
                                                           kNoneToken};
  return r;
}

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>(reserved().begin(), reserved().end())) {}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  if (tokens_.size() < kReservedCount || !std::equal(reserved().begin(), reserved().end(), tokens_.begin())) {
    throw ConfigError("vocabulary must start with the reserved tokens");
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!ids_.emplace(tokens_[i], i).second) throw ConfigError("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

Vocabulary Vocabulary::build(const Corpus& corpus, std::size_t min_freq) {
  std::map<std::string, std::size_t> counts;
  for (const auto& d : corpus.dialogues) {
    for (const auto& t : d.turns) {
      for (const auto& w : t.system) ++counts[w];
      for (const auto& w : t.user) ++counts[w];
      for (const auto& [key, value] : t.belief)
        for (const auto& w : value) ++counts[w];
    }
  }
  std::vector<std::string> tokens(reserved().begin(), reserved().end());
  for (const auto& [w, n] : counts) {
    if (n < min_freq) continue;
    if (std::find(reserved().begin(), reserved().end(), w) != reserved().end()) continue;
    tokens.push_back(w);
  }
  return Vocabulary(std::move(tokens));
}

std::optional<std::size_t> Vocabulary::find(const std::string& token) const {
  auto it = ids_.find(token);
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) throw IndexError("token id " + std::to_string(id) + " out of vocabulary range");
  return tokens_[id];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& t : tokens_) {
    for (unsigned char c : t) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= 0xFF;  // separator
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace trade::corpus
