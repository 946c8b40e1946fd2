#include "trade/corpus/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "trade/corpus/tokenize.hpp"
#include "trade/errors.hpp"
#include "trade/rng.hpp"

namespace trade::corpus {

using nlohmann::json;

std::optional<SlotKey> parse_slot_key(const std::string& joined) {
  const auto dash = joined.find('-');
  if (dash == std::string::npos || dash == 0 || dash + 1 == joined.size()) return std::nullopt;
  return SlotKey{joined.substr(0, dash), joined.substr(dash + 1)};
}

SlotRegistry::SlotRegistry(const std::map<std::string, std::vector<std::string>>& slots_by_domain) {
  std::set<std::string> slot_set;
  for (const auto& [domain, slots] : slots_by_domain) {
    if (domain.empty() || domain.find('-') != std::string::npos) {
      throw SchemaError("invalid domain name '" + domain + "' (must be non-empty, no hyphen)");
    }
    std::vector<std::string> sorted = slots;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw SchemaError("duplicate slot name in domain '" + domain + "'");
    }
    for (const auto& s : sorted) {
      if (s.empty()) throw SchemaError("empty slot name in domain '" + domain + "'");
      slot_set.insert(s);
    }
    slots_by_domain_[domain] = sorted;
    domains_.push_back(domain);
  }
  slot_names_.assign(slot_set.begin(), slot_set.end());
  for (std::size_t d = 0; d < domains_.size(); ++d) {
    for (const auto& s : slots_by_domain_.at(domains_[d])) {
      DomainSlot p;
      p.key = SlotKey{domains_[d], s};
      p.index = pairs_.size();
      p.domain_index = d;
      p.slot_index = static_cast<std::size_t>(std::lower_bound(slot_names_.begin(), slot_names_.end(), s) -
                                              slot_names_.begin());
      index_.emplace(p.key, p.index);
      pairs_.push_back(std::move(p));
    }
  }
}

std::optional<std::size_t> SlotRegistry::find(const SlotKey& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t SlotRegistry::index_of(const SlotKey& key) const {
  auto i = find(key);
  if (!i) throw IndexError("unregistered (domain, slot) pair: " + key.joined());
  return *i;
}

bool SlotRegistry::has_domain(const std::string& domain) const { return slots_by_domain_.count(domain) > 0; }

std::vector<std::size_t> SlotRegistry::pairs_of_domain(const std::string& domain) const {
  std::vector<std::size_t> out;
  for (const auto& p : pairs_)
    if (p.key.domain == domain) out.push_back(p.index);
  return out;
}

std::vector<std::size_t> SlotRegistry::all_pairs() const {
  std::vector<std::size_t> out(pairs_.size());
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

bool is_dontcare(const ValueTokens& value) { return value.size() == 1 && value[0] == kDontcareValue; }

const char* gate_name(GateLabel g) {
  switch (g) {
    case GateLabel::kPtr:
      return "ptr";
    case GateLabel::kNone:
      return "none";
    case GateLabel::kDontcare:
      return "dontcare";
  }
  return "?";
}

GateTarget gate_label_of(const BeliefState& belief, const DomainSlot& pair) {
  auto it = belief.find(pair.key);
  if (it == belief.end()) return {GateLabel::kNone, {kNoneToken, kEosToken}};
  if (is_dontcare(it->second)) return {GateLabel::kDontcare, {kDontcareValue, kEosToken}};
  ValueTokens tokens = it->second;
  tokens.emplace_back(kEosToken);
  return {GateLabel::kPtr, std::move(tokens)};
}

std::set<std::string> Dialogue::domains() const {
  std::set<std::string> out;
  for (const auto& t : turns)
    for (const auto& [key, value] : t.belief) out.insert(key.domain);
  return out;
}

bool Dialogue::touches(const std::string& domain) const {
  for (const auto& t : turns)
    for (const auto& [key, value] : t.belief)
      if (key.domain == domain) return true;
  return false;
}

std::size_t Corpus::turn_count() const {
  std::size_t n = 0;
  for (const auto& d : dialogues) n += d.turns.size();
  return n;
}

std::set<std::string> Corpus::dialogue_ids() const {
  std::set<std::string> ids;
  for (const auto& d : dialogues) ids.insert(d.id);
  return ids;
}

std::vector<std::string> make_history(const Dialogue& dialogue, std::size_t t, std::size_t window) {
  if (t >= dialogue.turns.size()) {
    throw IndexError("turn " + std::to_string(t) + " out of range for dialogue '" + dialogue.id + "' with " +
                     std::to_string(dialogue.turns.size()) + " turns");
  }
  const std::size_t first = (window == kAllTurns || window >= t) ? 0 : t - window;
  std::vector<std::string> out;
  for (std::size_t i = first; i <= t; ++i) {
    const Turn& turn = dialogue.turns[i];
    out.insert(out.end(), turn.system.begin(), turn.system.end());
    out.insert(out.end(), turn.user.begin(), turn.user.end());
  }
  return out;
}

std::vector<std::size_t> word_dropout(const std::vector<std::size_t>& ids, double rate, std::uint64_t seed,
                                      std::size_t first_regular_id, std::size_t unk_id) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("word dropout rate must be in [0, 1)");
  if (rate == 0.0) return ids;
  Rng rng(seed);
  std::bernoulli_distribution drop(rate);
  std::vector<std::size_t> out = ids;
  for (auto& id : out) {
    const bool d = drop(rng);
    if (id >= first_regular_id && d) id = unk_id;
  }
  return out;
}

DomainSplit exclude_domain(const Corpus& corpus, const std::string& domain) {
  if (!corpus.registry.has_domain(domain)) throw ConfigError("cannot exclude unknown domain '" + domain + "'");
  DomainSplit split;
  split.without.registry = corpus.registry;
  split.heldout.registry = corpus.registry;
  for (const auto& d : corpus.dialogues) {
    if (d.touches(domain)) {
      split.heldout.dialogues.push_back(d);
    } else {
      Dialogue stripped = d;
      for (auto& t : stripped.turns)
        std::erase_if(t.belief, [&](const auto& kv) { return kv.first.domain == domain; });
      split.without.dialogues.push_back(std::move(stripped));
    }
  }
  return split;
}

namespace {

std::vector<std::size_t> sample_indices(std::size_t count, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("sample fraction must be in (0, 1]");
  const auto want = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * static_cast<double>(count))));
  std::vector<std::size_t> idx(count);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  // Partial Fisher-Yates: the first `want` entries are a uniform sample.
  for (std::size_t i = 0; i < want && i + 1 < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, count - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(std::min(want, count));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

Corpus sample_fraction(const Corpus& corpus, const std::string& domain, double fraction, std::uint64_t seed) {
  if (!corpus.registry.has_domain(domain)) throw ConfigError("unknown domain '" + domain + "'");
  const Corpus subset = filter_domain(corpus, domain);
  if (subset.dialogues.empty()) throw ConfigError("domain '" + domain + "' has no dialogues to sample");
  Corpus out;
  out.registry = corpus.registry;
  for (std::size_t i : sample_indices(subset.dialogues.size(), fraction, seed)) out.dialogues.push_back(subset.dialogues[i]);
  return out;
}

Corpus sample_dialogues(const Corpus& corpus, double fraction, std::uint64_t seed) {
  if (corpus.dialogues.empty()) throw ConfigError("cannot sample from an empty corpus");
  Corpus out;
  out.registry = corpus.registry;
  for (std::size_t i : sample_indices(corpus.dialogues.size(), fraction, seed)) out.dialogues.push_back(corpus.dialogues[i]);
  return out;
}

Corpus merge(const Corpus& a, const Corpus& b) {
  Corpus out = a;
  const auto ids = a.dialogue_ids();
  for (const auto& d : b.dialogues)
    if (!ids.count(d.id)) out.dialogues.push_back(d);
  return out;
}

Corpus filter_domain(const Corpus& corpus, const std::string& domain) {
  Corpus out;
  out.registry = corpus.registry;
  for (const auto& d : corpus.dialogues)
    if (d.touches(domain)) out.dialogues.push_back(d);
  return out;
}

Corpus only_domain(const Corpus& corpus, const std::string& domain) {
  Corpus out;
  out.registry = corpus.registry;
  for (const auto& d : corpus.dialogues) {
    const auto domains = d.domains();
    if (domains.size() == 1 && *domains.begin() == domain) out.dialogues.push_back(d);
  }
  return out;
}

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t byte) {
  byte = std::min(byte, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(byte), '\n'));
}

const json& require_field(const json& obj, const char* field, const std::string& where) {
  if (!obj.is_object() || !obj.contains(field)) throw SchemaError(where + ": missing field '" + field + "'");
  return obj.at(field);
}

std::string require_string(const json& v, const std::string& where) {
  if (!v.is_string()) throw SchemaError(where + ": expected a string");
  return v.get<std::string>();
}

}  // namespace

Corpus parse_corpus(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("malformed corpus JSON at line " + std::to_string(line_of_offset(text, e.byte)) + ": " +
                     e.what());
  }
  if (!doc.is_object()) throw SchemaError("corpus root must be an object");

  const json& domains = require_field(doc, "domains", "corpus");
  const json& slots = require_field(doc, "slots", "corpus");
  const json& dialogues = require_field(doc, "dialogues", "corpus");
  if (!domains.is_array() || !slots.is_object() || !dialogues.is_array()) {
    throw SchemaError("corpus: 'domains' must be an array, 'slots' an object, 'dialogues' an array");
  }

  std::map<std::string, std::vector<std::string>> slots_by_domain;
  for (const auto& d : domains) slots_by_domain[require_string(d, "domains[]")];
  if (slots_by_domain.size() != domains.size()) throw SchemaError("corpus: duplicate domain names");
  for (const auto& [domain, list] : slots.items()) {
    if (!slots_by_domain.count(domain)) throw SchemaError("slots given for undeclared domain '" + domain + "'");
    if (!list.is_array()) throw SchemaError("slots['" + domain + "'] must be an array");
    for (const auto& s : list) slots_by_domain[domain].push_back(require_string(s, "slots['" + domain + "'][]"));
  }

  Corpus corpus;
  corpus.registry = SlotRegistry(slots_by_domain);

  std::set<std::string> offenders;
  std::set<std::string> seen_ids;
  for (std::size_t di = 0; di < dialogues.size(); ++di) {
    const json& dj = dialogues[di];
    const std::string where = "dialogues[" + std::to_string(di) + "]";
    Dialogue dialogue;
    dialogue.id = require_string(require_field(dj, "id", where), where + ".id");
    if (!seen_ids.insert(dialogue.id).second) throw SchemaError(where + ": duplicate dialogue id '" + dialogue.id + "'");
    const json& turns = require_field(dj, "turns", where);
    if (!turns.is_array() || turns.empty()) throw SchemaError(where + ".turns must be a non-empty array");
    for (std::size_t ti = 0; ti < turns.size(); ++ti) {
      const json& tj = turns[ti];
      const std::string twhere = where + ".turns[" + std::to_string(ti) + "]";
      Turn turn;
      turn.system = tokenize(tj.contains("system") ? require_string(tj.at("system"), twhere + ".system") : "");
      turn.user = tokenize(require_string(require_field(tj, "user", twhere), twhere + ".user"));
      if (tj.contains("belief")) {
        const json& belief = tj.at("belief");
        if (!belief.is_object()) throw SchemaError(twhere + ".belief must be an object");
        for (const auto& [k, v] : belief.items()) {
          auto key = parse_slot_key(k);
          if (!key || !corpus.registry.find(*key)) {
            offenders.insert(k);
            continue;
          }
          ValueTokens value = tokenize(require_string(v, twhere + ".belief['" + k + "']"));
          if (value.empty()) throw SchemaError(twhere + ".belief['" + k + "'] is empty");
          if (value.size() == 1 && value[0] == kNoneToken) continue;  // explicit "none" == absent
          turn.belief[*key] = std::move(value);
        }
      }
      dialogue.turns.push_back(std::move(turn));
    }
    corpus.dialogues.push_back(std::move(dialogue));
  }
  if (!offenders.empty()) {
    std::string list;
    for (const auto& o : offenders) list += (list.empty() ? "" : ", ") + o;
    throw SchemaError("belief labels use unregistered (domain, slot) pairs: " + list);
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open corpus file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_corpus(ss.str());
}

std::string dump_corpus(const Corpus& corpus) {
  json doc;
  doc["domains"] = corpus.registry.domains();
  doc["slots"] = json::object();
  for (const auto& [domain, slots] : corpus.registry.slots_by_domain()) doc["slots"][domain] = slots;
  doc["dialogues"] = json::array();
  for (const auto& d : corpus.dialogues) {
    json dj;
    dj["id"] = d.id;
    dj["turns"] = json::array();
    for (const auto& t : d.turns) {
      json tj;
      tj["system"] = join(t.system);
      tj["user"] = join(t.user);
      tj["belief"] = json::object();
      for (const auto& [key, value] : t.belief) tj["belief"][key.joined()] = join(value);
      dj["turns"].push_back(std::move(tj));
    }
    doc["dialogues"].push_back(std::move(dj));
  }
  return doc.dump(1) + "\n";
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write corpus file " + path.string());
  out << dump_corpus(corpus);
}

}  // namespace trade::corpus
