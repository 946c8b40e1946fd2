#include "trade/model/trainer.hpp"

#include <algorithm>
#include <numeric>

#include "trade/errors.hpp"
#include "trade/rng.hpp"

namespace trade::model {

std::vector<Sample> make_samples(const TradeModel& model, const corpus::Corpus& data,
                                 std::span<const std::size_t> pairs) {
  std::vector<Sample> out;
  out.reserve(data.turn_count());
  for (const auto& d : data.dialogues) {
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      out.push_back(model.make_sample(corpus::make_history(d, t, model.config().history_window), d.turns[t].belief, pairs));
    }
  }
  return out;
}

namespace {

bool better(const ValidationScore& a, const ValidationScore& b) {
  return a.joint > b.joint || (a.joint == b.joint && a.slot > b.slot);
}

}  // namespace

TrainResult train(TradeModel& model, const std::vector<Sample>& samples, const TrainConfig& config,
                  const Validator& validate, const GradientHook& hook,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  if (config.lr_patience == 0 || config.patience == 0) throw ConfigError("patience values must be positive");
  if (!(config.lr > 0.0) || !(config.lr_min > 0.0) || config.lr_min > config.lr) {
    throw ConfigError("learning rates must satisfy 0 < lr_min <= lr");
  }
  TrainResult result;
  if (config.max_epochs == 0) return result;
  if (samples.empty()) throw ConfigError("no training samples");

  numkit::Adam adam(numkit::AdamConfig{config.lr});
  numkit::ParamStore best_params = model.params();
  if (config.keep_initial) result.best = validate(model);
  std::size_t stale = 0;
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng(derive_seed(config.seed, "shuffle", epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog log;
    log.epoch = epoch;
    log.lr = adam.lr();
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<Sample> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(samples[order[i]]);

      ForwardOptions opts{true, derive_seed(config.seed, "dropout", step++)};
      BatchResult br = batch_loss(model, batch, opts, config.execution);
      if (hook) hook(model, br.grads, br.loss);
      try {
        adam.step(model.params(), br.grads);
      } catch (const NumericError&) {
        result.diverged = true;
        model.params() = best_params;
        return result;
      }
      log.loss += br.loss.total;
      log.gate_loss += br.loss.gate;
      log.value_loss += br.loss.value;
      ++batches;
    }
    log.loss /= static_cast<double>(batches);
    log.gate_loss /= static_cast<double>(batches);
    log.value_loss /= static_cast<double>(batches);

    log.valid = validate(model);
    const bool first_candidate = !config.keep_initial && result.best_epoch == 0;
    if (first_candidate || better(log.valid, result.best)) {
      log.improved = true;
      result.best = log.valid;
      result.best_epoch = epoch;
      best_params = model.params();
      stale = 0;
    } else {
      ++stale;
      if (stale % config.lr_patience == 0) adam.set_lr(std::max(config.lr_min, adam.lr() * 0.5));
    }
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);
    if (stale >= config.patience) break;
  }
  model.params() = best_params;
  return result;
}

}  // namespace trade::model
