#include "trade/corpus/synth.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "trade/corpus/tokenize.hpp"
#include "trade/errors.hpp"
#include "trade/rng.hpp"

namespace trade::corpus {

SynthSpec SynthSpec::default_spec() {
  const std::vector<std::string> places = {"cambridge",   "london kings cross", "ely",         "stansted airport",
                                           "norwich",     "peterborough",       "stevenage",   "bishops stortford",
                                           "leicester",   "birmingham new street", "broxbourne", "kings lynn"};
  SynthSpec spec;
  spec.slots = {
      SynthSlot{"area",
                {"centre", "north", "south", "east", "west"},
                {"in the {v}", "in the {v} area", "located in the {v}"},
                {"in any area", "anywhere in town"},
                {"in the same area"},
                {"which area would you like ?", "what part of town do you prefer ?"},
                {{"centre", {"center"}}}},
      SynthSlot{"food",
                {"chinese", "italian", "indian", "british", "thai", "french", "korean", "modern european", "spanish",
                 "turkish"},
                {"serving {v} food", "that serves {v} food", "with {v} cuisine"},
                {"serving any kind of food", "with any cuisine"},
                {"with the same food"},
                {"what type of food would you like ?", "any preference on cuisine ?"},
                {{"british", {"english"}}}},
      SynthSlot{"day",
                {"monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday"},
                {"on {v}", "for {v}", "this {v}"},
                {"on any day", "whatever day"},
                {"on the same day", "for the same day"},
                {"what day would you like ?", "which day is that for ?"},
                {}},
      SynthSlot{"departure",
                places,
                {"from {v}", "leaving from {v}", "departing from {v}"},
                {"from anywhere", "leaving from any place"},
                {"from the same place", "departing from the same place"},
                {"where will you be leaving from ?", "where are you departing from ?"},
                {{"london kings cross", {"kings cross"}}}},
      SynthSlot{"destination",
                places,
                {"to {v}", "going to {v}", "arriving at {v}"},
                {"going anywhere", "to any destination"},
                {"to the same place", "going to the same place"},
                {"where are you headed ?", "what is your destination ?"},
                {{"london kings cross", {"kings cross"}}}},
  };
  spec.domains = {
      SynthDomain{"restaurant",
                  {"area", "food", "day"},
                  {"i am looking for a restaurant", "i want to book a restaurant", "find me a restaurant"}},
      SynthDomain{"train", {"departure", "destination", "day"}, {"i need a train", "i am looking for a train", "book me a train"}},
      SynthDomain{"taxi", {"departure", "destination"}, {"i need a taxi", "please book a taxi", "get me a taxi"}},
  };
  return spec;
}

void SynthSpec::validate() const {
  auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!rate_ok(multi_turn_rate) || !rate_ok(dontcare_rate) || !rate_ok(paraphrase_rate) || !rate_ok(closing_rate)) {
    throw ConfigError("synth rates must lie in [0, 1]");
  }
  if (domains.empty()) throw ConfigError("synth spec has no domains");
  if (max_slots_per_turn == 0) throw ConfigError("max_slots_per_turn must be positive");
  if (domain_count_weights.empty()) throw ConfigError("domain_count_weights is empty");
  double wsum = 0.0;
  for (double w : domain_count_weights) {
    if (w < 0.0) throw ConfigError("negative domain_count_weights entry");
    wsum += w;
  }
  if (wsum <= 0.0) throw ConfigError("domain_count_weights sum to zero");
  if (followups.empty()) throw ConfigError("synth spec has no follow-up phrases");

  std::set<std::string> slot_names;
  for (const auto& s : slots) {
    if (!slot_names.insert(s.name).second) throw ConfigError("slot '" + s.name + "' defined twice");
    if (s.values.empty() || s.templates.empty()) throw ConfigError("slot '" + s.name + "' needs values and templates");
    for (const auto& t : s.templates)
      if (t.find("{v}") == std::string::npos) throw ConfigError("template '" + t + "' lacks {v}");
  }
  std::set<std::string> domain_names;
  for (const auto& d : domains) {
    if (!domain_names.insert(d.name).second) throw ConfigError("domain '" + d.name + "' defined twice");
    if (d.slots.empty() || d.openers.empty()) throw ConfigError("domain '" + d.name + "' needs slots and openers");
    if (!(d.weight > 0.0)) throw ConfigError("domain '" + d.name + "' needs a positive weight");
    std::set<std::string> seen;
    for (const auto& s : d.slots) {
      if (!seen.insert(s).second) throw ConfigError("duplicate slot '" + s + "' in domain '" + d.name + "'");
      if (!slot_names.count(s)) throw ConfigError("domain '" + d.name + "' uses undefined slot '" + s + "'");
    }
  }
}

namespace {

template <class T>
const T& choose(const std::vector<T>& v, Rng& rng) {
  std::uniform_int_distribution<std::size_t> d(0, v.size() - 1);
  return v[d(rng)];
}

bool chance(double p, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng) < p;
}

std::string fill(const std::string& tmpl, const std::string& value) {
  std::string out = tmpl;
  const auto pos = out.find("{v}");
  if (pos != std::string::npos) out.replace(pos, 3, value);
  return out;
}

std::string join_fragments(const std::vector<std::string>& parts) {
  std::string s;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) s += " and ";
    s += parts[i];
  }
  return s;
}

}  // namespace

SynthResult synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
  spec.validate();
  std::map<std::string, const SynthSlot*> slot_by_name;
  for (const auto& s : spec.slots) slot_by_name[s.name] = &s;

  std::map<std::string, std::vector<std::string>> registry_slots;
  for (const auto& d : spec.domains) registry_slots[d.name] = d.slots;

  SynthResult result;
  result.corpus.registry = SlotRegistry(registry_slots);
  SynthStats& stats = result.stats;

  Rng rng(seed);
  std::discrete_distribution<std::size_t> domain_count(spec.domain_count_weights.begin(),
                                                       spec.domain_count_weights.end());

  const bool uniform_domains =
      std::all_of(spec.domains.begin(), spec.domains.end(),
                  [&](const SynthDomain& d) { return d.weight == spec.domains.front().weight; });

  for (std::size_t n = 0; n < spec.dialogues; ++n) {
    Dialogue dialogue;
    char idbuf[32];
    std::snprintf(idbuf, sizeof idbuf, "%04zu", n);
    dialogue.id = spec.id_prefix + "-" + idbuf;

    std::vector<std::size_t> order(spec.domains.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    if (uniform_domains) {
      std::shuffle(order.begin(), order.end(), rng);
    } else {
      // Successive weighted draws without replacement.
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        std::vector<double> w;
        for (std::size_t j = i; j < order.size(); ++j) w.push_back(spec.domains[order[j]].weight);
        std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
        std::swap(order[i], order[i + pick(rng)]);
      }
    }
    const std::size_t k = std::min(order.size(), domain_count(rng) + 1);
    order.resize(k);

    BeliefState belief;
    std::map<std::string, ValueTokens> earlier;  // slot name -> value stated by a finished segment
    std::string pending_system;

    for (std::size_t seg = 0; seg < k; ++seg) {
      const SynthDomain& domain = spec.domains[order[seg]];
      std::vector<std::string> slots = domain.slots;
      std::shuffle(slots.begin(), slots.end(), rng);
      std::uniform_int_distribution<std::size_t> how_many(1, slots.size());
      slots.resize(how_many(rng));

      std::vector<std::vector<std::string>> chunks;
      for (std::size_t i = 0; i < slots.size();) {
        std::uniform_int_distribution<std::size_t> size(1, spec.max_slots_per_turn);
        const std::size_t take = std::min(size(rng), slots.size() - i);
        chunks.emplace_back(slots.begin() + static_cast<std::ptrdiff_t>(i),
                            slots.begin() + static_cast<std::ptrdiff_t>(i + take));
        i += take;
      }

      std::map<std::string, ValueTokens> stated;
      for (std::size_t c = 0; c < chunks.size(); ++c) {
        std::vector<std::string> fragments;
        for (const auto& name : chunks[c]) {
          const SynthSlot& slot = *slot_by_name.at(name);
          ++stats.values;
          ValueTokens value;
          std::string fragment;
          const bool inheritable = earlier.count(name) > 0;
          if (!slot.dontcare_phrases.empty() && chance(spec.dontcare_rate, rng)) {
            ++stats.dontcare;
            value = {kDontcareValue};
            fragment = choose(slot.dontcare_phrases, rng);
          } else if (inheritable && !slot.inherit_phrases.empty() &&
                     (++stats.inherit_opportunities, chance(spec.multi_turn_rate, rng))) {
            ++stats.inherited;
            value = earlier.at(name);
            fragment = choose(slot.inherit_phrases, rng);
          } else {
            const std::string& v = choose(slot.values, rng);
            std::string surface = v;
            if (auto it = slot.paraphrases.find(v); it != slot.paraphrases.end() && !it->second.empty() &&
                                                   chance(spec.paraphrase_rate, rng)) {
              ++stats.paraphrased;
              surface = choose(it->second, rng);
            }
            value = tokenize(v);
            fragment = fill(choose(slot.templates, rng), surface);
          }
          fragments.push_back(fragment);
          belief[SlotKey{domain.name, name}] = value;
          if (!is_dontcare(value)) stated[name] = value;
        }

        std::string user;
        if (c == 0) {
          user = choose(domain.openers, rng) + " " + join_fragments(fragments);
        } else {
          user = choose(spec.followups, rng) + " " + join_fragments(fragments);
        }
        Turn turn;
        turn.system = tokenize(pending_system);
        turn.user = tokenize(user);
        turn.belief = belief;
        dialogue.turns.push_back(std::move(turn));

        // The system asks for something in the next chunk, or moves on.
        if (c + 1 < chunks.size()) {
          const SynthSlot& next = *slot_by_name.at(chunks[c + 1].front());
          pending_system = next.questions.empty() ? "anything else ?" : choose(next.questions, rng);
        } else {
          pending_system = choose(spec.new_domain_prompts, rng);
        }
      }
      for (auto& [name, value] : stated) earlier[name] = value;
    }

    if (!spec.closings.empty() && chance(spec.closing_rate, rng)) {
      Turn turn;
      turn.system = tokenize(pending_system);
      turn.user = tokenize(choose(spec.closings, rng));
      turn.belief = belief;
      dialogue.turns.push_back(std::move(turn));
    }
    result.corpus.dialogues.push_back(std::move(dialogue));
  }
  return result;
}

}  // namespace trade::corpus
