#include "trade/eval/predictions.hpp"

#include <exception>
#include <fstream>

#include "trade/corpus/tokenize.hpp"
#include "trade/errors.hpp"

namespace trade::eval {

std::vector<TurnRecord> predict_corpus(const model::TradeModel& model, const corpus::Corpus& data,
                                       std::span<const std::size_t> pairs) {
  const std::size_t n = data.dialogues.size();
  std::vector<std::vector<TurnRecord>> per_dialogue(n);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::size_t d = 0; d < n; ++d) {
    try {
      const auto& dialogue = data.dialogues[d];
      auto& out = per_dialogue[d];
      for (std::size_t t = 0; t < dialogue.turns.size(); ++t) {
        auto history = corpus::make_history(dialogue, t, model.config().history_window);
        out.push_back(TurnRecord{dialogue.id, t, dialogue.turns[t].belief, model.predict(history, pairs).belief});
      }
    } catch (...) {
#pragma omp critical(trade_predict_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<TurnRecord> records;
  for (auto& v : per_dialogue) {
    for (auto& r : v) records.push_back(std::move(r));
  }
  return records;
}

std::vector<TurnEval> evaluate_records(std::span<const TurnRecord> records, const SlotRegistry& registry,
                                       std::span<const std::size_t> pairs) {
  std::vector<TurnEval> evals;
  evals.reserve(records.size());
  for (const auto& r : records) evals.push_back(evaluate_turn(r.gold, r.predicted, registry, pairs));
  return evals;
}

nlohmann::json belief_to_json(const BeliefState& belief) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, value] : belief) j[key.joined()] = corpus::join(value);
  return j;
}

std::string predictions_jsonl(std::span<const TurnRecord> records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::json j{{"dialogue_id", r.dialogue_id},
                     {"turn", r.turn},
                     {"gold", belief_to_json(r.gold)},
                     {"predicted", belief_to_json(r.predicted)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

void save_predictions(std::span<const TurnRecord> records, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << predictions_jsonl(records);
}

}  // namespace trade::eval
