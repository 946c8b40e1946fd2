#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "trade/eval/metrics.hpp"
#include "trade/model/model.hpp"

namespace trade::eval {

struct TurnRecord {
  std::string dialogue_id;
  std::size_t turn = 0;
  BeliefState gold;
  BeliefState predicted;
};

/// Greedy predictions for every turn, in corpus order. Only `pairs` are
/// queried (empty = all). Dialogues run in parallel.
std::vector<TurnRecord> predict_corpus(const model::TradeModel& model, const corpus::Corpus& data,
                                       std::span<const std::size_t> pairs = {});

std::vector<TurnEval> evaluate_records(std::span<const TurnRecord> records, const SlotRegistry& registry,
                                       std::span<const std::size_t> pairs = {});

/// {"domain-slot": "value", ...}
nlohmann::json belief_to_json(const BeliefState& belief);
/// One JSON object per line: dialogue_id, turn, gold, predicted.
std::string predictions_jsonl(std::span<const TurnRecord> records);
void save_predictions(std::span<const TurnRecord> records, const std::filesystem::path& path);

}  // namespace trade::eval
