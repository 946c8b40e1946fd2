#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "trade/corpus/corpus.hpp"
#include "trade/model/model.hpp"
#include "trade/numkit/adam.hpp"

namespace trade::model {

/// Every turn of every dialogue as a training example (history per the
/// model's window) supervising `pairs` (empty = all).
std::vector<Sample> make_samples(const TradeModel& model, const corpus::Corpus& data,
                                 std::span<const std::size_t> pairs = {});

struct TrainConfig {
  double lr = 1e-3;
  double lr_min = 1e-4;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  /// Stop after this many epochs without a validation improvement.
  std::size_t patience = 6;
  /// Halve the learning rate after this many epochs without improvement.
  std::size_t lr_patience = 1;
  /// Whether the starting parameters compete in early-stopping selection.
  /// When false the best trained epoch is kept even if it scores lower.
  bool keep_initial = true;
  std::uint64_t seed = 0;
  Execution execution = Execution::kParallel;
};

struct ValidationScore {
  double joint = 0.0;
  double slot = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss = 0.0;
  double gate_loss = 0.0;
  double value_loss = 0.0;
  double lr = 0.0;
  ValidationScore valid;
  bool improved = false;
};

/// Called with the batch gradient before the optimizer step; may rewrite it
/// (EWC penalty, GEM projection). `loss` may be adjusted for logging.
using GradientHook = std::function<void(const TradeModel&, numkit::Gradients&, LossParts&)>;
using Validator = std::function<ValidationScore(const TradeModel&)>;

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0 = the initial parameters were never beaten (or no epoch ran)
  ValidationScore best;
  bool diverged = false;
};

/// Adam with early stopping on validation joint accuracy (slot accuracy breaks
/// ties). After every `lr_patience` consecutive epochs without improvement the
/// learning rate halves (floored at lr_min). On return the
/// model holds the best-validation parameters. A non-finite gradient aborts
/// training with `diverged` set and the last good parameters restored.
TrainResult train(TradeModel& model, const std::vector<Sample>& samples, const TrainConfig& config,
                  const Validator& validate, const GradientHook& hook = {},
                  const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace trade::model
