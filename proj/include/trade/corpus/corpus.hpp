#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace trade::corpus {

/// Literal value string marking a "does not care" slot.
inline constexpr const char* kDontcareValue = "dontcare";

struct SlotKey {
  std::string domain;
  std::string slot;

  /// "domain-slot", the key form used in corpus files.
  std::string joined() const { return domain + "-" + slot; }
  auto operator<=>(const SlotKey&) const = default;
};

/// Parses "domain-slot" at the first hyphen.
std::optional<SlotKey> parse_slot_key(const std::string& joined);

/// One registered (domain, slot) pair; `index` is its position j in the
/// registry.
struct DomainSlot {
  SlotKey key;
  std::size_t index = 0;
  std::size_t domain_index = 0;
  std::size_t slot_index = 0;
};

/// The J (domain, slot) pairs, plus the N domains and M distinct slot names,
/// all in sorted order. Slot names are shared across domains: "area" in two
/// domains is one slot with one embedding.
class SlotRegistry {
 public:
  SlotRegistry() = default;
  explicit SlotRegistry(const std::map<std::string, std::vector<std::string>>& slots_by_domain);

  const std::vector<DomainSlot>& pairs() const { return pairs_; }
  const std::vector<std::string>& domains() const { return domains_; }
  const std::vector<std::string>& slot_names() const { return slot_names_; }
  const std::map<std::string, std::vector<std::string>>& slots_by_domain() const { return slots_by_domain_; }

  std::size_t size() const { return pairs_.size(); }
  std::optional<std::size_t> find(const SlotKey& key) const;
  std::size_t index_of(const SlotKey& key) const;
  bool has_domain(const std::string& domain) const;
  /// Registry indices of the pairs belonging to `domain`.
  std::vector<std::size_t> pairs_of_domain(const std::string& domain) const;
  std::vector<std::size_t> all_pairs() const;

  bool operator==(const SlotRegistry& other) const { return slots_by_domain_ == other.slots_by_domain_; }

 private:
  std::map<std::string, std::vector<std::string>> slots_by_domain_;
  std::vector<std::string> domains_;
  std::vector<std::string> slot_names_;
  std::vector<DomainSlot> pairs_;
  std::map<SlotKey, std::size_t> index_;
};

using ValueTokens = std::vector<std::string>;
/// Cumulative dialogue state: (domain, slot) -> value tokens, where the single
/// token "dontcare" marks a does-not-care value. Absent keys are "none".
using BeliefState = std::map<SlotKey, ValueTokens>;

bool is_dontcare(const ValueTokens& value);

enum class GateLabel : std::uint8_t { kPtr = 0, kNone = 1, kDontcare = 2 };
inline constexpr std::size_t kGateClasses = 3;
const char* gate_name(GateLabel g);

struct GateTarget {
  GateLabel gate;
  /// Target word sequence including the trailing EOS token string.
  ValueTokens tokens;
};

inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kNoneToken = "none";

/// absent -> (NONE, [none, <eos>]); dontcare -> (DONTCARE, [dontcare, <eos>]);
/// otherwise (PTR, value ++ [<eos>]).
GateTarget gate_label_of(const BeliefState& belief, const DomainSlot& pair);

struct Turn {
  std::vector<std::string> system;
  std::vector<std::string> user;
  BeliefState belief;
};

struct Dialogue {
  std::string id;
  std::vector<Turn> turns;

  /// Domains appearing in any turn's belief.
  std::set<std::string> domains() const;
  bool touches(const std::string& domain) const;
};

struct Corpus {
  SlotRegistry registry;
  std::vector<Dialogue> dialogues;

  std::size_t turn_count() const;
  std::set<std::string> dialogue_ids() const;
};

/// Window value meaning "every turn since the start of the dialogue".
inline constexpr std::size_t kAllTurns = std::numeric_limits<std::size_t>::max();

/// Concatenated history for 0-based turn `t`: for each of turns
/// max(0, t - window) .. t, the system tokens followed by the user tokens.
/// Throws IndexError when `t` is out of range.
std::vector<std::string> make_history(const Dialogue& dialogue, std::size_t t, std::size_t window = kAllTurns);

/// Replaces each id >= `first_regular_id` with `unk_id` independently with
/// probability `rate`. Throws ConfigError unless 0 <= rate < 1.
std::vector<std::size_t> word_dropout(const std::vector<std::size_t>& ids, double rate, std::uint64_t seed,
                                      std::size_t first_regular_id, std::size_t unk_id);

struct DomainSplit {
  Corpus without;  // dialogues not touching the domain
  Corpus heldout;  // dialogues touching the domain
};

/// Zero-shot split. Labels of the excluded domain are stripped from `without`
/// (a no-op for dialogues that never touch it); the registry is kept whole in
/// both halves. Throws ConfigError for an unregistered domain.
DomainSplit exclude_domain(const Corpus& corpus, const std::string& domain);

/// Uniform dialogue-level sample without replacement from the dialogues that
/// touch `domain`: max(1, round(fraction * count)) dialogues, in corpus order.
Corpus sample_fraction(const Corpus& corpus, const std::string& domain, double fraction, std::uint64_t seed);

/// Uniform sample of max(1, round(fraction * size)) dialogues of the corpus.
Corpus sample_dialogues(const Corpus& corpus, double fraction, std::uint64_t seed);

/// Dialogues of `a` followed by those of `b` not already in `a` (by id).
Corpus merge(const Corpus& a, const Corpus& b);

/// Dialogues touching `domain` (empty result allowed).
Corpus filter_domain(const Corpus& corpus, const std::string& domain);

/// Dialogues whose labels mention `domain` and no other domain.
Corpus only_domain(const Corpus& corpus, const std::string& domain);

Corpus load_corpus(const std::filesystem::path& path);
Corpus parse_corpus(const std::string& json_text);
std::string dump_corpus(const Corpus& corpus);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

}  // namespace trade::corpus
