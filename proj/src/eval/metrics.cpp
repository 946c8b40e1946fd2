#include "trade/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include "trade/corpus/tokenize.hpp"
#include "trade/errors.hpp"

namespace trade::eval {

bool TurnEval::all_correct() const {
  return std::all_of(correct.begin(), correct.end(), [](std::uint8_t c) { return c != 0; });
}

std::string canonical_value(const corpus::ValueTokens& value) {
  return corpus::join(corpus::tokenize(corpus::join(value)));
}

namespace {

// Empty for NONE, otherwise the canonical value.
std::string status_of(const BeliefState& belief, const corpus::SlotKey& key) {
  auto it = belief.find(key);
  if (it == belief.end()) return {};
  return canonical_value(it->second);
}

void require_nonempty(std::span<const TurnEval> evals) {
  if (evals.empty()) throw ConfigError("metrics need at least one turn");
}

}  // namespace

TurnEval evaluate_turn(const BeliefState& gold, const BeliefState& predicted, const SlotRegistry& registry,
                       std::span<const std::size_t> pairs) {
  TurnEval e;
  e.gold = gold;
  e.predicted = predicted;
  if (pairs.empty()) {
    e.pairs = registry.all_pairs();
  } else {
    e.pairs.assign(pairs.begin(), pairs.end());
  }
  e.correct.reserve(e.pairs.size());
  e.both_none.reserve(e.pairs.size());
  for (std::size_t j : e.pairs) {
    if (j >= registry.size()) throw IndexError("pair index " + std::to_string(j) + " out of range");
    const auto& key = registry.pairs()[j].key;
    const std::string g = status_of(gold, key);
    const std::string p = status_of(predicted, key);
    e.correct.push_back(g == p ? 1 : 0);
    e.both_none.push_back(g.empty() && p.empty() ? 1 : 0);
  }
  return e;
}

double joint_goal_accuracy(std::span<const TurnEval> evals) {
  require_nonempty(evals);
  std::size_t hits = 0;
  for (const auto& e : evals) hits += e.all_correct() ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(evals.size());
}

double slot_accuracy(std::span<const TurnEval> evals, bool count_none_agreements) {
  require_nonempty(evals);
  std::size_t hits = 0;
  std::size_t total = 0;
  for (const auto& e : evals) {
    for (std::size_t k = 0; k < e.pairs.size(); ++k) {
      if (!count_none_agreements && e.both_none[k]) continue;
      ++total;
      hits += e.correct[k];
    }
  }
  return total == 0 ? 1.0 : static_cast<double>(hits) / static_cast<double>(total);
}

std::vector<SlotError> per_slot_errors(std::span<const TurnEval> evals, const SlotRegistry& registry) {
  std::vector<SlotError> rows(registry.size());
  std::vector<std::uint8_t> seen(registry.size(), 0);
  for (const auto& e : evals) {
    for (std::size_t k = 0; k < e.pairs.size(); ++k) {
      SlotError& r = rows[e.pairs[k]];
      seen[e.pairs[k]] = 1;
      ++r.count;
      r.errors += e.correct[k] ? 0 : 1;
    }
  }
  std::vector<SlotError> out;
  for (std::size_t j = 0; j < rows.size(); ++j) {
    if (!seen[j]) continue;
    SlotError r = rows[j];
    r.pair = j;
    r.name = registry.pairs()[j].key.joined();
    r.rate = static_cast<double>(r.errors) / static_cast<double>(r.count);
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const SlotError& a, const SlotError& b) { return a.rate > b.rate; });
  return out;
}

MetricReport make_report(std::span<const TurnEval> evals, const SlotRegistry& registry, bool count_none_agreements) {
  MetricReport r;
  r.joint = joint_goal_accuracy(evals);
  r.slot = slot_accuracy(evals, count_none_agreements);
  r.per_slot = per_slot_errors(evals, registry);
  r.turns = evals.size();
  return r;
}

nlohmann::json report_to_json(const MetricReport& report) {
  nlohmann::json per_slot = nlohmann::json::array();
  for (const auto& e : report.per_slot) {
    per_slot.push_back({{"pair", e.name}, {"error_rate", e.rate}, {"errors", e.errors}, {"count", e.count}});
  }
  return {{"joint_goal_accuracy", report.joint},
          {"slot_accuracy", report.slot},
          {"turns", report.turns},
          {"per_slot_error", per_slot}};
}

std::string format_report(const MetricReport& report) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "turns                " << report.turns << "\n";
  os << "joint goal accuracy  " << report.joint << "\n";
  os << "slot accuracy        " << report.slot << "\n";
  std::size_t width = 4;
  for (const auto& e : report.per_slot) width = std::max(width, e.name.size());
  os << "\n" << std::left << std::setw(static_cast<int>(width)) << "pair" << "  error rate  errors/turns\n";
  for (const auto& e : report.per_slot) {
    os << std::left << std::setw(static_cast<int>(width)) << e.name << "  " << std::setw(10) << e.rate << "  "
       << e.errors << "/" << e.count << "\n";
  }
  return os.str();
}

SimilarityMatrix embedding_similarity(const numkit::Tensor& embeddings, std::vector<std::string> names) {
  if (embeddings.rank() != 2) throw ShapeError("slot embeddings must be a matrix");
  const std::size_t m = embeddings.rows();
  if (names.size() != m) throw ShapeError("one name per embedding row required");
  std::vector<double> norms(m);
  SimilarityMatrix out;
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (double v : embeddings.row(i)) s += v * v;
    norms[i] = std::sqrt(s);
    if (norms[i] == 0.0) ++out.zero_norm;
  }
  out.values = numkit::Tensor(numkit::Shape{m, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = i; k < m; ++k) {
      double c = 0.0;
      if (norms[i] > 0.0 && norms[k] > 0.0) {
        double d = 0.0;
        auto a = embeddings.row(i);
        auto b = embeddings.row(k);
        for (std::size_t t = 0; t < a.size(); ++t) d += a[t] * b[t];
        c = std::clamp(d / (norms[i] * norms[k]), -1.0, 1.0);
        if (i == k) c = 1.0;
      }
      out.values.at(i, k) = c;
      out.values.at(k, i) = c;
    }
  }
  out.names = std::move(names);
  return out;
}

std::string similarity_csv(const SimilarityMatrix& m) {
  std::ostringstream os;
  os << std::setprecision(17) << "slot";
  for (const auto& n : m.names) os << "," << n;
  os << "\n";
  for (std::size_t i = 0; i < m.names.size(); ++i) {
    os << m.names[i];
    for (std::size_t k = 0; k < m.names.size(); ++k) os << "," << m.values.at(i, k);
    os << "\n";
  }
  return os.str();
}

}  // namespace trade::eval
