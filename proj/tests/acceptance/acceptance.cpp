// Acceptance suite: one PASS/FAIL line per criterion. Optional arguments pick
// criteria by number, e.g. `acceptance 1 3 8`.
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "trade/cli/experiment.hpp"
#include "trade/continual/continual.hpp"
#include "trade/eval/metrics.hpp"
#include "trade/eval/predictions.hpp"
#include "trade/model/checkpoint.hpp"
#include "trade/model/trainer.hpp"
#include "trade/numkit/ops.hpp"
#include "trade/rng.hpp"

using namespace trade;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return v[v.size() / 2];
}

std::string list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt("%.3f", v[i]);
  return s + "]";
}

// ---------------------------------------------------------------- 1
Outcome gradient_check() {
  const auto t0 = Clock::now();
  model::TradeModel m(testing::tiny_config(8), testing::tiny_vocab(), testing::tiny_registry(), 11);
  if (m.vocab().size() != 20 || m.registry().size() != 4) return {false, "fixture is not |V|=20, 2x2 pairs"};
  const auto samples = testing::tiny_samples(m);
  const auto br = model::batch_loss(m, samples, model::ForwardOptions{}, model::Execution::kSerial);
  const auto checks =
      testing::finite_difference_check(m.params(), br.grads, [&] { return model::batch_loss_value(m, samples); }, 1e-5);
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : checks) {
    if (c.max_rel_error >= worst) {
      worst = c.max_rel_error;
      worst_name = c.name;
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-3 && secs < 60.0,
          "max rel error " + fmt("%.2e", worst) + " (" + worst_name + "), " + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------- 2
Outcome distribution_invariants() {
  std::mt19937_64 rng(2024);
  const auto vocab = testing::tiny_vocab();
  std::vector<std::string> pool(vocab.tokens().begin() + corpus::Vocabulary::kReservedCount, vocab.tokens().end());
  for (const char* oov : {"zedville", "qux", "blorp"}) pool.emplace_back(oov);
  std::uniform_int_distribution<std::size_t> word(0, pool.size() - 1), len(1, 12);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  double worst = 0.0;
  std::size_t exact_failures = 0;
  std::unique_ptr<model::TradeModel> m;
  for (int trial = 0; trial < 1000; ++trial) {
    if (trial % 50 == 0) {
      m = std::make_unique<model::TradeModel>(testing::tiny_config(8), vocab, testing::tiny_registry(),
                                              derive_seed(7, "trial", trial));
    }
    std::vector<std::string> history(len(rng));
    for (auto& w : history) w = pool[word(rng)];
    const auto input = m->prepare(history);
    const std::size_t ext = input.extended_size(vocab.size());

    numkit::Tape tape(&m->params());
    const auto enc = m->encode(tape, input);
    numkit::Tensor h_raw({8}), w_raw({8});
    for (double& x : h_raw.storage()) x = normal(rng);
    for (double& x : w_raw.storage()) x = normal(rng);
    const auto h = tape.constant(h_raw);
    const auto p_vocab = m->vocab_dist(tape, h);
    const auto [p_history, context] = m->history_attention(h, enc.states);
    const auto p_gen = m->generation_gate(tape, h, tape.constant(w_raw), context);
    const auto p_final = model::TradeModel::mix_distributions(p_vocab, p_history, p_gen, input.copy_ids, ext);
    const auto gate = m->slot_gate(tape, context);
    for (auto v : {p_vocab, p_history, p_final, gate}) {
      double s = 0.0;
      for (double x : v.value().storage()) s += x;
      worst = std::max(worst, std::abs(s - 1.0));
    }

    const auto pure_vocab =
        model::TradeModel::mix_distributions(p_vocab, p_history, tape.constant(numkit::Tensor::scalar(1.0)),
                                             input.copy_ids, ext);
    const auto pure_copy =
        model::TradeModel::mix_distributions(p_vocab, p_history, tape.constant(numkit::Tensor::scalar(0.0)),
                                             input.copy_ids, ext);
    std::vector<double> scattered(ext, 0.0);
    for (std::size_t k = 0; k < input.copy_ids.size(); ++k) scattered[input.copy_ids[k]] += p_history.value()[k];
    for (std::size_t i = 0; i < ext; ++i) {
      const double v = i < vocab.size() ? p_vocab.value()[i] : 0.0;
      if (pure_vocab.value()[i] != v) ++exact_failures;
      if (pure_copy.value()[i] != scattered[i]) ++exact_failures;
    }
  }
  return {worst <= 1e-9 && exact_failures == 0,
          "max |sum - 1| " + fmt("%.2e", worst) + ", inexact pure-mix entries " + std::to_string(exact_failures)};
}

// ---------------------------------------------------------------- 3
Outcome metric_oracles() {
  const auto registry = testing::tiny_registry();
  std::mt19937_64 rng(33);
  std::size_t mismatches = 0, order_violations = 0;
  for (int set = 0; set < 100; ++set) {
    std::vector<std::pair<corpus::BeliefState, corpus::BeliefState>> turns;
    std::vector<eval::TurnEval> evals;
    const double agree = 0.5 + 0.5 * (set % 10) / 10.0;
    for (int t = 0; t < 1 + set % 30; ++t) {
      turns.push_back(testing::random_belief_pair(registry, rng, agree));
      evals.push_back(eval::evaluate_turn(turns.back().first, turns.back().second, registry));
    }
    const auto o = testing::oracle_metrics(turns, registry);
    const double joint = eval::joint_goal_accuracy(evals);
    const double slot = eval::slot_accuracy(evals);
    if (joint != o.joint || slot != o.slot) ++mismatches;
    for (const auto& e : eval::per_slot_errors(evals, registry)) {
      if (e.errors != o.errors[e.pair]) ++mismatches;
    }
    if (joint > slot) ++order_violations;
  }
  return {mismatches == 0 && order_violations == 0,
          "mismatches " + std::to_string(mismatches) + ", joint > slot in " + std::to_string(order_violations) + " sets"};
}

// ---------------------------------------------------------------- 4
Outcome memorization() {
  const auto t0 = Clock::now();
  auto spec = corpus::SynthSpec::default_spec();
  spec.dialogues = 1;
  const auto data = corpus::synth_corpus(spec, 5).corpus;
  const auto config = cli::ExperimentConfig::defaults();
  model::TradeModel m(config.model, corpus::Vocabulary::build(data), data.registry, 5);
  const auto samples = model::make_samples(m, data);
  model::TrainConfig tc = config.train;
  tc.max_epochs = 500;
  // Fixed budget at a constant rate: validation on the training dialogue is
  // flat for many epochs before the first exact turn, so no early stopping.
  tc.patience = 500;
  tc.lr_patience = 500;
  tc.seed = 5;
  std::size_t first_perfect = 0;
  auto validate = cli::make_validator(data, {});
  model::train(m, samples, tc, validate, {}, [&](const model::EpochLog& l) {
    if (first_perfect == 0 && l.valid.joint == 1.0) first_perfect = l.epoch;
  });
  const double final_joint = cli::evaluate(m, data).joint;
  const double secs = seconds_since(t0);
  return {first_perfect > 0 && first_perfect <= 500 && final_joint == 1.0 && secs < 120.0,
          std::to_string(samples.size()) + " turns, joint 1.0 first at epoch " + std::to_string(first_perfect) +
              ", final joint " + fmt("%.3f", final_joint) + ", " + fmt("%.1fs", secs)};
}

// ---------------------------------------------------------------- 5
Outcome default_corpus() {
  const auto t0 = Clock::now();
  const auto c = cli::ExperimentConfig::defaults();
  const auto splits = cli::make_splits(c);
  const auto out = cli::train_model(c, splits.train, splits.valid);
  const auto report = cli::evaluate(out.model, splits.test);
  const double secs = seconds_since(t0);
  const auto& reg = splits.train.registry;
  return {report.joint >= 0.90 && secs < 900.0 && reg.domains().size() == 3 && reg.size() == 8 &&
              splits.train.dialogues.size() == 300 && splits.valid.dialogues.size() == 50 &&
              splits.test.dialogues.size() == 50,
          "test joint " + fmt("%.3f", report.joint) + " slot " + fmt("%.3f", report.slot) + ", best epoch " +
              std::to_string(out.result.best_epoch) + ", " + fmt("%.0fs", secs)};
}

// ---------------------------------------------------------------- 6
Outcome zero_shot() {
  std::vector<double> gains;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto t0 = Clock::now();
    auto c = cli::ExperimentConfig::defaults();
    c.seed = seed;
    const auto splits = cli::make_splits(c);
    const auto protocol = cli::domain_protocol(splits, c.zeroshot_domain);
    const auto base = cli::train_model(c, protocol.source_train, protocol.source_valid, protocol.source_pairs);
    const double zeroshot = cli::evaluate(base.model, protocol.target_test, protocol.target_pairs).joint;
    std::vector<eval::TurnEval> none;
    for (const auto& d : protocol.target_test.dialogues) {
      for (const auto& t : d.turns) none.push_back(eval::evaluate_turn(t.belief, {}, splits.test.registry, protocol.target_pairs));
    }
    const double all_none = eval::joint_goal_accuracy(none);
    std::cout << "  seed " << seed << ": " << c.zeroshot_domain << " zero-shot " << fmt("%.3f", zeroshot)
              << " (all-none " << fmt("%.3f", all_none) << "), " << fmt("%.0fs", seconds_since(t0)) << std::endl;
    gains.push_back(zeroshot - all_none);
  }
  const double m = median(gains);
  return {m >= 0.20, "median gain over all-none " + fmt("%.3f", m) + " " + list(gains)};
}

// ---------------------------------------------------------------- 7
Outcome continual_learning() {
  std::vector<double> naive_drop, gem_drop, ewc_gap, naive_target, scratch_target;
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto t0 = Clock::now();
    auto c = cli::ExperimentConfig::expansion_defaults();
    c.seed = seed;
    const auto splits = cli::make_splits(c);
    const auto protocol = cli::domain_protocol(splits, c.finetune.domain);
    const auto base = cli::train_model(c, protocol.source_train, protocol.source_valid, protocol.source_pairs);
    const auto extras = cli::continual_extras(c, base.model, protocol.source_train, protocol.source_pairs);
    auto run = [&](continual::Strategy s, std::vector<double> lambdas) {
      auto fc = c;
      fc.finetune.strategy = s;
      fc.finetune.lambda_grid = std::move(lambdas);
      model::TradeModel m = base.model;
      return cli::run_finetune_protocol(fc, m, extras, protocol);
    };
    const auto naive = run(continual::Strategy::kNaive, {});
    const auto gem = run(continual::Strategy::kGem, {});
    const auto ewc = run(continual::Strategy::kEwc, {1e12});
    const double base_source = naive.source_test_before.joint;
    const auto scratch = cli::train_model(c, naive.target_sample, protocol.target_valid, protocol.target_pairs);
    const double scratch_joint = cli::evaluate(scratch.model, protocol.target_test, protocol.target_pairs).joint;

    naive_drop.push_back(base_source - naive.source_test.joint);
    gem_drop.push_back(base_source - gem.source_test.joint);
    ewc_gap.push_back(std::abs(base_source - ewc.source_test.joint));
    naive_target.push_back(naive.target_test.joint);
    scratch_target.push_back(scratch_joint);
    std::cout << "  seed " << seed << ": " << c.finetune.domain << " on " << naive.target_sample.dialogues.size()
              << " dialogue(s); source base " << fmt("%.3f", base_source) << " naive "
              << fmt("%.3f", naive.source_test.joint) << " gem " << fmt("%.3f", gem.source_test.joint) << " ewc "
              << fmt("%.3f", ewc.source_test.joint) << "; target before " << fmt("%.3f", naive.target_test_before.joint)
              << " naive " << fmt("%.3f", naive.target_test.joint) << " gem " << fmt("%.3f", gem.target_test.joint)
              << " scratch " << fmt("%.3f", scratch_joint) << ", " << fmt("%.0fs", seconds_since(t0)) << std::endl;
  }
  const bool a = median(gem_drop) < median(naive_drop);
  const bool b = *std::max_element(ewc_gap.begin(), ewc_gap.end()) <= 0.01;
  const bool c = median(naive_target) >= median(scratch_target);
  return {a && b && c, std::string("(a) ") + (a ? "ok" : "FAIL") + " drop gem " + list(gem_drop) + " naive " +
                           list(naive_drop) + "; (b) " + (b ? "ok" : "FAIL") + " ewc |gap| " + list(ewc_gap) +
                           "; (c) " + (c ? "ok" : "FAIL") + " target fine-tuned " + list(naive_target) +
                           " scratch " + list(scratch_target)};
}

// ---------------------------------------------------------------- 8
Outcome gem_properties() {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::size_t violating = 0, failures = 0;
  double worst_dot = 0.0, worst_oracle = 0.0, worst_idem = 0.0;
  while (violating < 100) {
    const std::size_t n = 50 + violating * 10;
    std::vector<double> g(n), mem(n);
    for (double& x : g) x = normal(rng);
    for (double& x : mem) x = normal(rng);
    long double gm = 0, mm = 0;
    for (std::size_t i = 0; i < n; ++i) {
      gm += static_cast<long double>(g[i]) * mem[i];
      mm += static_cast<long double>(mem[i]) * mem[i];
    }
    if (gm >= 0) continue;
    ++violating;
    const auto p = continual::gem_project(g, mem);
    double d = 0.0;
    for (std::size_t i = 0; i < n; ++i) d += p.gradient[i] * mem[i];
    worst_dot = std::min(worst_dot, d);
    const auto again = continual::gem_project(p.gradient, mem);
    // Least squares: minimize ||x - g||^2 subject to <x, mem> = 0 via the
    // normal equations of the one-column problem, in extended precision.
    const long double coef = gm / mm;
    for (std::size_t i = 0; i < n; ++i) {
      worst_idem = std::max(worst_idem, std::abs(again.gradient[i] - p.gradient[i]));
      const double oracle = static_cast<double>(static_cast<long double>(g[i]) - coef * mem[i]);
      worst_oracle = std::max(worst_oracle, std::abs(p.gradient[i] - oracle));
    }
    if (!p.projected) ++failures;
  }
  return {worst_dot >= -1e-10 && worst_idem <= 1e-10 && worst_oracle <= 1e-10 && failures == 0,
          "min <g~, g_mem> " + fmt("%.2e", worst_dot) + ", idempotence " + fmt("%.2e", worst_idem) +
              ", oracle " + fmt("%.2e", worst_oracle)};
}

// ---------------------------------------------------------------- 9
Outcome ewc_zero() {
  model::TradeModel m(testing::tiny_config(8), testing::tiny_vocab(), testing::tiny_registry(), 9);
  model::TradeModel moved(testing::tiny_config(8), testing::tiny_vocab(), testing::tiny_registry(), 10);
  const auto fisher = continual::fisher_diag(m, testing::tiny_samples(m));
  double worst = 0.0;
  for (double lambda : {0.0, 1.0, 1e12}) {
    const auto p = continual::ewc_penalty(m.params(), m.params(), fisher, lambda);
    worst = std::max(worst, std::abs(p.value));
  }
  const auto zero_lambda = continual::ewc_penalty(moved.params(), m.params(), fisher, 0.0);
  worst = std::max(worst, std::abs(zero_lambda.value));
  const double moved_value = continual::ewc_penalty(moved.params(), m.params(), fisher, 1.0).value;
  return {worst == 0.0 && moved_value > 0.0,
          "penalty at anchor / lambda 0: " + fmt("%g", worst) + ", moved: " + fmt("%.3e", moved_value)};
}

// ---------------------------------------------------------------- 10
std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

Outcome reproducibility() {
  const auto root = fs::temp_directory_path() / "trade_acceptance_repro";
  fs::remove_all(root);
  auto c = cli::ExperimentConfig::defaults();
  c.output_dir = root.string();
  c.data.train_dialogues = 60;
  c.data.valid_dialogues = 10;
  c.data.test_dialogues = 10;
  c.train.max_epochs = 3;
  std::ostringstream sink;
  const auto a = cli::cmd_train(c, sink);
  const auto b = cli::cmd_train(c, sink);
  bool same = true;
  std::string differing;
  for (const char* f : {"checkpoint.json", "test_report.json", "test_predictions.jsonl", "train_log.csv"}) {
    if (slurp(a / f) != slurp(b / f) || slurp(a / f).empty()) {
      same = false;
      differing += std::string(" ") + f;
    }
  }
  const auto bytes = fs::file_size(a / "checkpoint.json");
  fs::remove_all(root);
  return {same, same ? "checkpoints (" + std::to_string(bytes) + " bytes) and reports identical"
                     : "differing:" + differing};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient check", gradient_check},
      {"distribution invariants", distribution_invariants},
      {"metric oracles", metric_oracles},
      {"single-dialogue memorization", memorization},
      {"default synthetic corpus", default_corpus},
      {"zero-shot transfer", zero_shot},
      {"continual learning", continual_learning},
      {"GEM projection", gem_properties},
      {"EWC penalty zeros", ewc_zero},
      {"reproducibility", reproducibility},
  };
  std::set<std::size_t> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoul(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!wanted.empty() && !wanted.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (i + 1) << "] " << criteria[i].first << ": " << o.detail
              << std::endl;
    failed += o.pass ? 0 : 1;
  }
  return failed == 0 ? 0 : 1;
}
