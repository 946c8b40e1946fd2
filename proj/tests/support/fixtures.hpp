#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "trade/corpus/corpus.hpp"
#include "trade/corpus/vocabulary.hpp"
#include "trade/model/model.hpp"
#include "trade/numkit/params.hpp"

namespace trade::testing {

/// Two domains sharing two slot names, 20-token vocabulary.
inline corpus::SlotRegistry tiny_registry() {
  return corpus::SlotRegistry({{"hotel", {"area", "price"}}, {"shop", {"area", "price"}}});
}

inline corpus::Vocabulary tiny_vocab() {
  std::vector<std::string> tokens(corpus::Vocabulary::reserved().begin(), corpus::Vocabulary::reserved().end());
  for (const char* w : {"a", "hotel", "shop", "in", "the", "north", "south", "cheap", "expensive", "want", "i",
                        "any", "price", "area"}) {
    tokens.emplace_back(w);
  }
  return corpus::Vocabulary(tokens);
}

inline model::ModelConfig tiny_config(std::size_t dim = 8) {
  model::ModelConfig c;
  c.emb_dim = dim;
  c.hidden_dim = dim;
  c.max_decode_len = 4;
  c.dropout = 0.0;
  c.word_dropout = 0.0;
  c.embedding_init_std = 0.5;
  return c;
}

inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

inline corpus::BeliefState belief(std::initializer_list<std::pair<std::string, std::string>> kv) {
  corpus::BeliefState b;
  for (const auto& [k, v] : kv) b[*corpus::parse_slot_key(k)] = words(v);
  return b;
}

/// Samples covering PTR (including an out-of-vocabulary copy), NONE and
/// DONTCARE labels.
inline std::vector<model::Sample> tiny_samples(const model::TradeModel& m) {
  return {
      m.make_sample(words("i want a hotel in the north"), belief({{"hotel-area", "north"}})),
      m.make_sample(words("a cheap shop in any area"), belief({{"shop-price", "cheap"}, {"shop-area", "dontcare"}})),
      m.make_sample(words("i want a hotel in zedville"), belief({{"hotel-area", "zedville"}})),
  };
}

struct BlockCheck {
  std::string name;
  double max_rel_error = 0.0;
};

/// Central differences of `loss` against every parameter entry, compared with
/// `analytic` block by block. Elementwise relative error with a 1e-6 floor on
/// the denominator.
inline std::vector<BlockCheck> finite_difference_check(numkit::ParamStore& params, const numkit::Gradients& analytic,
                                                       const std::function<double()>& loss, double step = 1e-5) {
  std::vector<BlockCheck> out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    BlockCheck b{params.name(p), 0.0};
    auto& values = params.value(p).storage();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss();
      values[i] = saved - step;
      const double down = loss();
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p].storage()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-6});
      b.max_rel_error = std::max(b.max_rel_error, std::abs(a - numeric) / denom);
    }
    out.push_back(b);
  }
  return out;
}

/// Random gold/predicted pair over `registry`: each pair is NONE, dontcare or
/// one of three values, and the prediction copies gold with probability
/// `agree`.
inline std::pair<corpus::BeliefState, corpus::BeliefState> random_belief_pair(const corpus::SlotRegistry& registry,
                                                                              std::mt19937_64& rng,
                                                                              double agree) {
  static const std::vector<std::vector<std::string>> kValues = {
      {}, {"dontcare"}, {"north"}, {"south"}, {"kings", "cross"}};
  std::uniform_int_distribution<std::size_t> pick(0, kValues.size() - 1);
  std::bernoulli_distribution same(agree);
  corpus::BeliefState gold, pred;
  for (const auto& p : registry.pairs()) {
    const auto& g = kValues[pick(rng)];
    const auto& q = same(rng) ? g : kValues[pick(rng)];
    if (!g.empty()) gold[p.key] = g;
    if (!q.empty()) pred[p.key] = q;
  }
  return {gold, pred};
}

/// Brute-force metric values straight from the belief maps.
struct OracleMetrics {
  double joint = 0.0;
  double slot = 0.0;
  std::vector<std::size_t> errors;  // per registry pair
};

inline OracleMetrics oracle_metrics(const std::vector<std::pair<corpus::BeliefState, corpus::BeliefState>>& turns,
                                    const corpus::SlotRegistry& registry) {
  OracleMetrics o;
  o.errors.assign(registry.size(), 0);
  std::size_t exact = 0, hits = 0;
  for (const auto& [gold, pred] : turns) {
    bool all = true;
    for (const auto& p : registry.pairs()) {
      auto gi = gold.find(p.key);
      auto pi = pred.find(p.key);
      const std::vector<std::string> g = gi == gold.end() ? std::vector<std::string>{} : gi->second;
      const std::vector<std::string> q = pi == pred.end() ? std::vector<std::string>{} : pi->second;
      if (g == q) {
        ++hits;
      } else {
        all = false;
        ++o.errors[p.index];
      }
    }
    exact += all ? 1 : 0;
  }
  o.joint = static_cast<double>(exact) / static_cast<double>(turns.size());
  o.slot = static_cast<double>(hits) / static_cast<double>(turns.size() * registry.size());
  return o;
}

}  // namespace trade::testing
