#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "trade/corpus/corpus.hpp"
#include "trade/numkit/tensor.hpp"

namespace trade::eval {

using corpus::BeliefState;
using corpus::SlotRegistry;

/// One evaluated turn: gold and predicted states plus a correctness bit per
/// evaluated pair. A pair is correct when both sides agree on its status and,
/// for filled values, on the canonical value string; absent means NONE.
struct TurnEval {
  BeliefState gold;
  BeliefState predicted;
  std::vector<std::size_t> pairs;  // registry indices evaluated
  std::vector<std::uint8_t> correct;  // parallel to `pairs`
  std::vector<std::uint8_t> both_none;  // parallel to `pairs`

  bool all_correct() const;
};

/// Lowercased tokens re-split on whitespace and punctuation, joined by single
/// spaces.
std::string canonical_value(const corpus::ValueTokens& value);

/// Evaluates `pairs` (empty = every registered pair).
TurnEval evaluate_turn(const BeliefState& gold, const BeliefState& predicted, const SlotRegistry& registry,
                       std::span<const std::size_t> pairs = {});

/// Fraction of turns whose every evaluated pair is correct. Throws ConfigError
/// on an empty set.
double joint_goal_accuracy(std::span<const TurnEval> evals);

/// Per-pair accuracy over turns x pairs. With `count_none_agreements` false,
/// pairs that are NONE on both sides leave the denominator (1.0 if nothing
/// remains). Throws ConfigError on an empty set.
double slot_accuracy(std::span<const TurnEval> evals, bool count_none_agreements = true);

struct SlotError {
  std::size_t pair = 0;
  std::string name;  // "domain-slot"
  std::size_t errors = 0;
  std::size_t count = 0;
  double rate = 0.0;
};

/// Error rate per evaluated pair, highest first (ties by registry order).
std::vector<SlotError> per_slot_errors(std::span<const TurnEval> evals, const SlotRegistry& registry);

struct MetricReport {
  double joint = 0.0;
  double slot = 0.0;
  std::vector<SlotError> per_slot;
  std::size_t turns = 0;
};

MetricReport make_report(std::span<const TurnEval> evals, const SlotRegistry& registry,
                         bool count_none_agreements = true);
nlohmann::json report_to_json(const MetricReport& report);
/// Human-readable table.
std::string format_report(const MetricReport& report);

struct SimilarityMatrix {
  std::vector<std::string> names;
  numkit::Tensor values;  // M x M
  /// Number of slots with a zero-norm embedding (their entries are 0).
  std::size_t zero_norm = 0;
};

/// Cosine similarity between the rows of `embeddings` (M x d).
SimilarityMatrix embedding_similarity(const numkit::Tensor& embeddings, std::vector<std::string> names);
std::string similarity_csv(const SimilarityMatrix& m);

}  // namespace trade::eval
