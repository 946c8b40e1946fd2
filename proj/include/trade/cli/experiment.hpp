#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "trade/continual/continual.hpp"
#include "trade/corpus/corpus.hpp"
#include "trade/corpus/synth.hpp"
#include "trade/eval/metrics.hpp"
#include "trade/model/model.hpp"
#include "trade/model/trainer.hpp"

namespace trade::cli {

/// Corpus source: three JSON files, or (when all paths are empty) a synthetic
/// corpus split in order into train / valid / test.
struct DataConfig {
  std::string train_path;
  std::string valid_path;
  std::string test_path;
  /// Merge patch applied to the default synthetic spec.
  nlohmann::json synth = nlohmann::json::object();
  std::size_t train_dialogues = 300;
  std::size_t valid_dialogues = 50;
  std::size_t test_dialogues = 50;

  bool synthetic() const { return train_path.empty() && valid_path.empty() && test_path.empty(); }
};

struct FinetuneSettings {
  std::string base_checkpoint;
  std::string domain = "taxi";
  double fraction = 0.01;
  continual::Strategy strategy = continual::Strategy::kNaive;
  /// EWC lambda candidates; more than one triggers selection on target validation.
  std::vector<double> lambda_grid = {0.01, 0.1, 1.0};
  double memory_fraction = 0.01;
  /// Source samples used for the Fisher estimate (0 = all).
  std::size_t fisher_samples = 0;
  model::TrainConfig train;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir = "runs";
  DataConfig data;
  model::ModelConfig model;
  model::TrainConfig train;
  std::string zeroshot_domain = "taxi";
  FinetuneSettings finetune;
  /// Slot accuracy counts pairs that are NONE in both gold and prediction.
  bool count_none_agreements = true;
  /// Store the Fisher diagonal and a GEM memory in trained checkpoints.
  bool store_continual_state = true;

  /// Desk-scale defaults.
  static ExperimentConfig defaults();
  /// defaults() on a larger corpus for few-shot domain expansion: the
  /// held-out domain is restaurant, whose food and area slots no other domain
  /// has, and it is four times as likely as each other domain so that a 1%
  /// sample holds about ten dialogues while the source domains keep ~500.
  static ExperimentConfig expansion_defaults();
  /// Throws ConfigError describing the first invalid field.
  void validate() const;
};

/// Unknown keys are rejected. Missing keys keep defaults().
ExperimentConfig parse_experiment(const nlohmann::json& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);
nlohmann::json experiment_to_json(const ExperimentConfig& c);
/// Applies "a.b.c=value" overrides; value parses as JSON, else as a string.
nlohmann::json apply_overrides(nlohmann::json j, const std::vector<std::string>& assignments);

struct Splits {
  corpus::Corpus train;
  corpus::Corpus valid;
  corpus::Corpus test;
};

/// Synthesizes or loads the three splits.
Splits make_splits(const ExperimentConfig& c);
corpus::SynthSpec synth_spec(const ExperimentConfig& c);

/// Validation closure: joint / slot accuracy of greedy predictions over `pairs`.
model::Validator make_validator(const corpus::Corpus& data, std::vector<std::size_t> pairs,
                                bool count_none_agreements = true);
eval::MetricReport evaluate(const model::TradeModel& model, const corpus::Corpus& data,
                            std::span<const std::size_t> pairs = {}, bool count_none_agreements = true);

struct TrainOutcome {
  model::TradeModel model;
  model::TrainResult result;
};

/// Builds the vocabulary from `train`, initializes from the config seed and
/// trains with early stopping on `valid` over `pairs` (empty = all).
TrainOutcome train_model(const ExperimentConfig& c, const corpus::Corpus& train, const corpus::Corpus& valid,
                         std::span<const std::size_t> pairs = {},
                         const std::function<void(const model::EpochLog&)>& on_epoch = {});

/// Fisher diagonal over (up to fisher_samples of) `source` and a GEM memory
/// of memory_fraction of it, both over `pairs` (empty = all), in
/// checkpoint-extras form.
nlohmann::json continual_extras(const ExperimentConfig& c, const model::TradeModel& model,
                                const corpus::Corpus& source, std::span<const std::size_t> pairs = {});

/// Zero-shot protocol splits for `domain`: training data without it and the
/// single-domain dialogues of it.
struct DomainProtocol {
  corpus::Corpus source_train, source_valid, source_test;
  corpus::Corpus target_train, target_valid, target_test;
  std::vector<std::size_t> source_pairs, target_pairs;
};
DomainProtocol domain_protocol(const Splits& splits, const std::string& domain);

/// Few-shot run from a base model; `base_extras` supplies EWC / GEM state.
/// For EWC with several lambdas each is tried and the best target-validation
/// score wins (`selected_lambda`).
struct FinetuneOutcome {
  continual::FinetuneResult result;
  std::optional<double> selected_lambda;
  corpus::Corpus target_sample;
  eval::MetricReport target_test_before;
  eval::MetricReport source_test_before;
  eval::MetricReport target_test;
  eval::MetricReport source_test;
};
FinetuneOutcome run_finetune_protocol(const ExperimentConfig& c, model::TradeModel& model,
                                      const nlohmann::json& base_extras, const DomainProtocol& protocol);

/// Shared epoch CSV header and row formatter.
std::string epoch_csv_header();
std::string epoch_csv_row(const model::EpochLog& log);

// ---- commands; each returns the run directory it wrote
std::filesystem::path cmd_synth(const ExperimentConfig& c, std::ostream& out);
std::filesystem::path cmd_train(const ExperimentConfig& c, std::ostream& out);
std::filesystem::path cmd_eval(const ExperimentConfig& c, const std::filesystem::path& checkpoint,
                               const std::string& split, const std::string& domain_filter, std::ostream& out);
std::filesystem::path cmd_zeroshot(const ExperimentConfig& c, std::ostream& out);
std::filesystem::path cmd_finetune(const ExperimentConfig& c, std::ostream& out);

/// Fresh "<output_dir>/<command>-<UTC timestamp>[-n]" directory.
std::filesystem::path fresh_run_dir(const std::filesystem::path& root, const std::string& command);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace trade::cli
