#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"
#include "trade/errors.hpp"
#include "trade/eval/metrics.hpp"
#include "trade/eval/predictions.hpp"

using namespace trade;
using namespace trade::eval;
using trade::numkit::Tensor;
using trade::testing::belief;

namespace {

corpus::SlotRegistry registry() { return trade::testing::tiny_registry(); }

}  // namespace

TEST(Metrics, WorkedExample) {
  auto r = registry();
  std::vector<TurnEval> evals = {
      evaluate_turn(belief({{"hotel-area", "north"}}), belief({{"hotel-area", "north"}}), r),
      evaluate_turn(belief({{"hotel-area", "north"}}), belief({{"hotel-area", "south"}}), r),
      evaluate_turn(belief({{"shop-price", "cheap"}}), belief({}), r),
      evaluate_turn(belief({}), belief({{"shop-area", "dontcare"}}), r),
  };
  EXPECT_DOUBLE_EQ(joint_goal_accuracy(evals), 0.25);
  EXPECT_DOUBLE_EQ(slot_accuracy(evals), 13.0 / 16.0);
  // Without NONE/NONE agreements: turn 1 (1 hit), turn 2 (0/1), turn 3 (0/1), turn 4 (0/1).
  EXPECT_DOUBLE_EQ(slot_accuracy(evals, false), 1.0 / 4.0);
  auto errs = per_slot_errors(evals, r);
  ASSERT_EQ(errs.size(), 4u);
  EXPECT_EQ(errs.back().errors, 0u);
  for (const auto& e : errs) {
    if (e.name == "hotel-area") {
      EXPECT_EQ(e.errors, 1u);
    }
    if (e.name == "shop-price") {
      EXPECT_EQ(e.errors, 1u);
    }
    if (e.name == "shop-area") {
      EXPECT_EQ(e.errors, 1u);
    }
  }
}

TEST(Metrics, ValuesCompareAfterTokenization) {
  auto r = registry();
  corpus::BeliefState gold, pred;
  gold[{"hotel", "area"}] = {"kings", "cross"};
  pred[{"hotel", "area"}] = {"Kings cross"};
  EXPECT_TRUE(evaluate_turn(gold, pred, r).all_correct());
}

TEST(Metrics, MatchBruteForceOracle) {
  auto r = registry();
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<std::pair<corpus::BeliefState, corpus::BeliefState>> turns;
    std::vector<TurnEval> evals;
    const std::size_t n = 1 + trial % 40;
    for (std::size_t i = 0; i < n; ++i) {
      turns.push_back(trade::testing::random_belief_pair(r, rng, 0.8));
      evals.push_back(evaluate_turn(turns.back().first, turns.back().second, r));
    }
    auto o = trade::testing::oracle_metrics(turns, r);
    EXPECT_EQ(joint_goal_accuracy(evals), o.joint);
    EXPECT_EQ(slot_accuracy(evals), o.slot);
    EXPECT_LE(joint_goal_accuracy(evals), slot_accuracy(evals));
    double weighted = 0.0;
    std::size_t count = 0;
    for (const auto& e : per_slot_errors(evals, r)) {
      EXPECT_EQ(e.errors, o.errors[e.pair]);
      EXPECT_EQ(e.count, n);
      weighted += e.rate * static_cast<double>(e.count);
      count += e.count;
    }
    EXPECT_NEAR(1.0 - weighted / static_cast<double>(count), slot_accuracy(evals), 1e-12);
  }
}

TEST(Metrics, PairSubsetsAndErrors) {
  auto r = registry();
  const std::vector<std::size_t> hotel = r.pairs_of_domain("hotel");
  auto e = evaluate_turn(belief({{"shop-area", "north"}}), belief({}), r, hotel);
  EXPECT_TRUE(e.all_correct());
  EXPECT_EQ(e.pairs, hotel);
  const std::vector<std::size_t> bad = {99};
  EXPECT_THROW(evaluate_turn({}, {}, r, bad), IndexError);
  EXPECT_THROW(joint_goal_accuracy({}), ConfigError);
  std::vector<TurnEval> all_none = {evaluate_turn({}, {}, r)};
  EXPECT_EQ(slot_accuracy(all_none, false), 1.0);
}

TEST(Metrics, ReportJsonAndTable) {
  auto r = registry();
  std::vector<TurnEval> evals = {evaluate_turn(belief({{"hotel-area", "north"}}), belief({}), r)};
  auto rep = make_report(evals, r, true);
  auto j = report_to_json(rep);
  EXPECT_EQ(j["joint_goal_accuracy"], 0.0);
  EXPECT_EQ(j["per_slot_error"][0]["pair"], "hotel-area");
  EXPECT_NE(format_report(rep).find("hotel-area"), std::string::npos);
}

TEST(Similarity, CosineOracle) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  Tensor e({4, 6});
  for (double& x : e.storage()) x = n(rng);
  for (std::size_t k = 0; k < 6; ++k) e.at(1, k) = 3.0 * e.at(0, k);  // parallel rows
  for (std::size_t k = 0; k < 6; ++k) e.at(3, k) = 0.0;
  auto s = embedding_similarity(e, {"a", "b", "c", "d"});
  EXPECT_EQ(s.zero_norm, 1u);
  EXPECT_NEAR(s.values.at(0, 1), 1.0, 1e-12);
  EXPECT_EQ(s.values.at(3, 0), 0.0);
  EXPECT_EQ(s.values.at(3, 3), 0.0);
  double dot = 0, na = 0, nb = 0;
  for (std::size_t k = 0; k < 6; ++k) {
    dot += e.at(0, k) * e.at(2, k);
    na += e.at(0, k) * e.at(0, k);
    nb += e.at(2, k) * e.at(2, k);
  }
  EXPECT_NEAR(s.values.at(0, 2), dot / std::sqrt(na * nb), 1e-12);
  EXPECT_EQ(s.values.at(0, 2), s.values.at(2, 0));
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(s.values.at(i, i), 1.0);

  Tensor orth({2, 2});
  orth.at(0, 0) = 1.0;
  orth.at(1, 1) = 2.0;
  EXPECT_EQ(embedding_similarity(orth, {"x", "y"}).values.at(0, 1), 0.0);
  EXPECT_THROW(embedding_similarity(orth, {"x"}), ShapeError);
  auto csv = similarity_csv(embedding_similarity(orth, {"x", "y"}));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "slot,x,y");
}

TEST(Predictions, JsonlLines) {
  std::vector<TurnRecord> records = {{"d1", 0, belief({{"hotel-area", "north"}}), belief({})},
                                     {"d1", 1, belief({}), belief({{"shop-price", "cheap"}})}};
  auto text = predictions_jsonl(records);
  std::size_t lines = 0, pos = 0;
  while ((pos = text.find('\n', pos)) != std::string::npos) {
    ++lines;
    ++pos;
  }
  EXPECT_EQ(lines, 2u);
  auto first = nlohmann::json::parse(text.substr(0, text.find('\n')));
  EXPECT_EQ(first["dialogue_id"], "d1");
  EXPECT_EQ(first["gold"]["hotel-area"], "north");
  EXPECT_TRUE(first["predicted"].empty());
  auto evals = evaluate_records(records, registry());
  EXPECT_EQ(joint_goal_accuracy(evals), 0.0);
}

TEST(Predictions, CorpusOrderAndEvaluation) {
  trade::model::TradeModel m(trade::testing::tiny_config(), trade::testing::tiny_vocab(),
                             trade::testing::tiny_registry(), 3);
  corpus::Corpus c;
  c.registry = m.registry();
  for (int i = 0; i < 5; ++i) {
    corpus::Dialogue d;
    d.id = "d" + std::to_string(i);
    for (int t = 0; t < 3; ++t) {
      corpus::Turn turn;
      turn.user = trade::testing::words("i want a hotel in the north");
      turn.belief = belief({{"hotel-area", "north"}});
      d.turns.push_back(turn);
    }
    c.dialogues.push_back(d);
  }
  auto records = predict_corpus(m, c);
  ASSERT_EQ(records.size(), 15u);
  EXPECT_EQ(records[4].dialogue_id, "d1");
  EXPECT_EQ(records[4].turn, 1u);
  for (const auto& rec : records) {
    EXPECT_EQ(rec.predicted, m.predict_belief(corpus::make_history(c.dialogues[rec.dialogue_id[1] - '0'], rec.turn)));
  }
}
