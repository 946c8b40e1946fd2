#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "trade/corpus/corpus.hpp"
#include "trade/model/model.hpp"
#include "trade/model/trainer.hpp"
#include "trade/numkit/params.hpp"

namespace trade::continual {

/// Diagonal empirical Fisher: per-parameter mean of squared per-sample
/// gradients, stored under the parameter names.
struct FisherDiag {
  numkit::ParamStore values;
  std::size_t samples = 0;
};

/// Evaluated at the model's current parameters without dropout. Samples are
/// processed in fixed-size chunks reduced in order, so the result does not
/// depend on the thread count. Throws ConfigError on an empty stream.
FisherDiag fisher_diag(const model::TradeModel& model, std::span<const model::Sample> samples);

struct EwcPenalty {
  double value = 0.0;
  numkit::Gradients grad;  // lambda * F * (theta - anchor)
};

/// sum_i lambda/2 * F_i * (theta_i - anchor_i)^2 and its gradient. Throws
/// ConfigError for lambda < 0 and ShapeError when the stores disagree.
EwcPenalty ewc_penalty(const numkit::ParamStore& theta, const numkit::ParamStore& anchor, const FisherDiag& fisher,
                       double lambda);
/// base_loss plus the penalty.
double ewc_loss(double base_loss, const numkit::ParamStore& theta, const numkit::ParamStore& anchor,
                const FisherDiag& fisher, double lambda);

struct GemProjection {
  std::vector<double> gradient;
  bool projected = false;
};

/// Returns g unchanged when <g, g_mem> >= 0, otherwise removes the g_mem
/// component so the result is orthogonal to g_mem. Throws ShapeError on a
/// length mismatch.
GemProjection gem_project(std::span<const double> g, std::span<const double> g_mem);

/// Fixed set of stored source dialogues and the pairs their loss covers
/// (empty = all).
class EpisodicMemory {
 public:
  /// max(1, round(fraction * |source|)) dialogues drawn uniformly.
  static EpisodicMemory sample(const corpus::Corpus& source, double fraction, std::uint64_t seed,
                               std::vector<std::size_t> pairs = {});
  explicit EpisodicMemory(corpus::Corpus dialogues, std::vector<std::size_t> pairs = {});

  const corpus::Corpus& dialogues() const { return dialogues_; }
  const std::vector<std::size_t>& pairs() const { return pairs_; }
  std::size_t size() const { return dialogues_.dialogues.size(); }

 private:
  corpus::Corpus dialogues_;
  std::vector<std::size_t> pairs_;
};

/// Checkpoint extras: "ewc" holds the Fisher diagonal and the anchor
/// parameters, "gem" the memory dialogues.
nlohmann::json fisher_to_json(const FisherDiag& fisher, const numkit::ParamStore& anchor);
struct EwcState {
  FisherDiag fisher;
  numkit::ParamStore anchor;
};
EwcState ewc_from_json(const nlohmann::json& j);
nlohmann::json memory_to_json(const EpisodicMemory& memory);
EpisodicMemory memory_from_json(const nlohmann::json& j);

enum class Strategy { kNaive, kEwc, kGem };
Strategy parse_strategy(const std::string& name);
const char* strategy_name(Strategy s);

struct FinetuneConfig {
  Strategy strategy = Strategy::kNaive;
  double lambda = 0.0;
  model::TrainConfig train;
};

struct FinetuneEpoch {
  model::EpochLog log;
  model::ValidationScore source;
};

struct FinetuneResult {
  model::TrainResult train;
  std::vector<FinetuneEpoch> epochs;
  model::ValidationScore target_before;
  model::ValidationScore source_before;
  model::ValidationScore target_after;
  model::ValidationScore source_after;
};

/// Continues training `model` on `target` samples. naive: plain Adam. ewc:
/// Adam on the loss plus the EWC penalty anchored at `ewc->anchor`. gem: each
/// batch gradient is projected against the full-memory gradient before the
/// step. Early stopping follows `validate_target`; `validate_source` is
/// logged every epoch. Throws ConfigError when the strategy's state is
/// missing or inconsistent with the model.
FinetuneResult finetune(model::TradeModel& model, const std::vector<model::Sample>& target,
                        const FinetuneConfig& config, const EwcState* ewc, const EpisodicMemory* memory,
                        const model::Validator& validate_target, const model::Validator& validate_source);

}  // namespace trade::continual
