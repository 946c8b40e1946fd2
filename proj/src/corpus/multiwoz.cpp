#include "trade/corpus/multiwoz.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <optional>

#include "trade/corpus/tokenize.hpp"
#include "trade/errors.hpp"

namespace trade::corpus {
namespace {

using nlohmann::json;

std::string lower_trim(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::optional<ValueTokens> normalize_value(const json& raw) {
  if (!raw.is_string()) return std::nullopt;
  const std::string v = lower_trim(raw.get<std::string>());
  if (v.empty() || v == "not mentioned" || v == "none") return std::nullopt;
  if (v == "dontcare" || v == "dont care" || v == "don't care" || v == "do n't care" || v == "does not care") {
    return ValueTokens{kDontcareValue};
  }
  ValueTokens tokens = tokenize(v);
  if (tokens.empty()) return std::nullopt;
  return tokens;
}

std::string text_of(const json& entry, const std::string& id) {
  if (!entry.is_object() || !entry.contains("text") || !entry.at("text").is_string()) {
    throw SchemaError("dialogue '" + id + "': log entry without a text string");
  }
  return entry.at("text").get<std::string>();
}

BeliefState belief_of(const json& entry, const std::string& id, const MultiwozOptions& options,
                      std::map<std::string, std::set<std::string>>& seen) {
  if (!entry.contains("metadata") || !entry.at("metadata").is_object()) {
    throw SchemaError("dialogue '" + id + "': system log entry without metadata");
  }
  BeliefState belief;
  for (const auto& [domain, state] : entry.at("metadata").items()) {
    if (!options.domains.count(domain) || !state.is_object()) continue;
    auto add = [&](const std::string& slot, const json& value) {
      auto v = normalize_value(value);
      if (!v) return;
      belief[SlotKey{domain, slot}] = *v;
      seen[domain].insert(slot);
    };
    if (state.contains("semi") && state.at("semi").is_object()) {
      for (const auto& [slot, value] : state.at("semi").items()) add(lower_trim(slot), value);
    }
    if (state.contains("book") && state.at("book").is_object()) {
      for (const auto& [slot, value] : state.at("book").items()) {
        if (slot != "booked") add("book " + lower_trim(slot), value);
      }
    }
  }
  return belief;
}

}  // namespace

Corpus convert_multiwoz(const json& raw, const MultiwozOptions& options) {
  if (!raw.is_object()) throw SchemaError("MultiWOZ file must map dialogue ids to dialogues");
  std::map<std::string, std::set<std::string>> seen;
  std::vector<Dialogue> dialogues;
  for (const auto& [id, body] : raw.items()) {
    if (!body.is_object() || !body.contains("log") || !body.at("log").is_array()) {
      throw SchemaError("dialogue '" + id + "' has no log array");
    }
    const json& log = body.at("log");
    Dialogue d;
    d.id = id;
    for (std::size_t k = 0; 2 * k + 1 < log.size(); ++k) {
      Turn t;
      if (k > 0) t.system = tokenize(text_of(log[2 * k - 1], id));
      t.user = tokenize(text_of(log[2 * k], id));
      t.belief = belief_of(log[2 * k + 1], id, options, seen);
      d.turns.push_back(std::move(t));
    }
    if (!d.turns.empty()) dialogues.push_back(std::move(d));
  }
  std::map<std::string, std::vector<std::string>> slots;
  for (const auto& [domain, names] : seen) slots[domain] = {names.begin(), names.end()};
  Corpus c;
  c.registry = SlotRegistry(slots);
  c.dialogues = std::move(dialogues);
  return c;
}

Corpus load_multiwoz(const std::filesystem::path& path, const MultiwozOptions& options) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  json raw;
  try {
    raw = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return convert_multiwoz(raw, options);
}

}  // namespace trade::corpus
