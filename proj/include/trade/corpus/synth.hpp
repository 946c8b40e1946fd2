#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "trade/corpus/corpus.hpp"

namespace trade::corpus {

/// A slot name shared by every domain that lists it. Phrase fragments contain
/// "{v}" where the surface form of the value goes.
struct SynthSlot {
  std::string name;
  std::vector<std::string> values;
  std::vector<std::string> templates;
  std::vector<std::string> dontcare_phrases;
  /// Used when the value is inherited from an earlier domain ("on the same day").
  std::vector<std::string> inherit_phrases;
  /// System questions asking for this slot.
  std::vector<std::string> questions;
  /// value -> alternative surface forms that still label as `value`.
  std::map<std::string, std::vector<std::string>> paraphrases;
};

struct SynthDomain {
  std::string name;
  std::vector<std::string> slots;
  std::vector<std::string> openers;
  /// Relative chance of appearing in a dialogue.
  double weight = 1.0;
};

/// Desk-scale stand-in for a multi-domain dialogue corpus.
struct SynthSpec {
  std::vector<SynthSlot> slots;
  std::vector<SynthDomain> domains;
  std::size_t dialogues = 300;
  std::string id_prefix = "dlg";
  /// Weight of dialogues touching 1, 2, 3, ... domains.
  std::vector<double> domain_count_weights = {0.45, 0.45, 0.10};
  std::size_t max_slots_per_turn = 2;
  /// Probability that a slot whose name was already filled by an earlier
  /// domain in the dialogue inherits that value instead of a fresh one.
  double multi_turn_rate = 0.3;
  double dontcare_rate = 0.05;
  double paraphrase_rate = 0.1;
  /// Probability of a trailing thank-you turn that leaves the state unchanged.
  double closing_rate = 0.3;
  std::vector<std::string> followups = {"it should be", "i would like it", "make it", "i want it"};
  std::vector<std::string> closings = {"no , that is all . thank you", "that is everything , goodbye"};
  std::vector<std::string> new_domain_prompts = {"is there anything else i can help with ?",
                                                 "done . what else do you need ?"};

  /// Three domains and eight (domain, slot) pairs: restaurant {area, day, food},
  /// train {day, departure, destination}, taxi {departure, destination}.
  static SynthSpec default_spec();
  /// Throws ConfigError for duplicate slot names within a domain, unknown
  /// slots, empty lexicons or rates outside [0, 1].
  void validate() const;
};

struct SynthStats {
  std::size_t values = 0;
  std::size_t dontcare = 0;
  std::size_t paraphrased = 0;
  std::size_t inherit_opportunities = 0;
  std::size_t inherited = 0;
};

struct SynthResult {
  Corpus corpus;
  SynthStats stats;
};

/// Seed-deterministic templated dialogues with cumulative gold belief states.
SynthResult synth_corpus(const SynthSpec& spec, std::uint64_t seed);

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthSlot, name, values, templates, dontcare_phrases, inherit_phrases,
                                                questions, paraphrases)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthDomain, name, slots, openers, weight)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SynthSpec, slots, domains, dialogues, id_prefix,
                                                domain_count_weights, max_slots_per_turn, multi_turn_rate,
                                                dontcare_rate, paraphrase_rate, closing_rate, followups, closings,
                                                new_domain_prompts)

}  // namespace trade::corpus
