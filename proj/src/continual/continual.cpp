#include "trade/continual/continual.hpp"

#include <algorithm>
#include <exception>

#include "trade/errors.hpp"
#include "trade/model/checkpoint.hpp"

namespace trade::continual {

namespace nk = numkit;

namespace {

constexpr std::size_t kFisherChunk = 16;

nk::Gradients sample_gradient(const model::TradeModel& model, const model::Sample& s) {
  return model::batch_loss(model, std::span<const model::Sample>(&s, 1), model::ForwardOptions{},
                           model::Execution::kSerial)
      .grads;
}

void require_matching(const nk::ParamStore& a, const nk::ParamStore& b, const char* what) {
  if (a.size() != b.size()) throw ShapeError(std::string(what) + ": parameter count mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.name(i) != b.name(i) || a.value(i).shape() != b.value(i).shape()) {
      throw ShapeError(std::string(what) + ": parameter '" + a.name(i) + "' does not line up");
    }
  }
}

}  // namespace

FisherDiag fisher_diag(const model::TradeModel& model, std::span<const model::Sample> samples) {
  if (samples.empty()) throw ConfigError("Fisher estimate needs at least one sample");
  const nk::ParamStore& params = model.params();
  FisherDiag f;
  for (std::size_t i = 0; i < params.size(); ++i) f.values.add(params.name(i), nk::Tensor::zeros_like(params.value(i)));

  for (std::size_t start = 0; start < samples.size(); start += kFisherChunk) {
    const std::size_t n = std::min(kFisherChunk, samples.size() - start);
    std::vector<nk::Gradients> grads(n);
    std::vector<std::exception_ptr> errors(n);
    const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic)
    for (long k = 0; k < count; ++k) {
      try {
        grads[static_cast<std::size_t>(k)] = sample_gradient(model, samples[start + static_cast<std::size_t>(k)]);
      } catch (...) {
        errors[static_cast<std::size_t>(k)] = std::current_exception();
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
    for (const auto& g : grads) {
      for (std::size_t p = 0; p < params.size(); ++p) {
        auto dst = f.values.value(p).storage().data();
        const auto& src = g[p].storage();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i] * src[i];
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (std::size_t p = 0; p < f.values.size(); ++p)
    for (double& x : f.values.value(p).storage()) x *= inv;
  f.samples = samples.size();
  return f;
}

EwcPenalty ewc_penalty(const nk::ParamStore& theta, const nk::ParamStore& anchor, const FisherDiag& fisher,
                       double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("EWC lambda must be non-negative");
  require_matching(theta, anchor, "EWC anchor");
  require_matching(theta, fisher.values, "EWC Fisher");
  EwcPenalty out;
  out.grad = nk::Gradients(theta);
  for (std::size_t p = 0; p < theta.size(); ++p) {
    const auto& t = theta.value(p).storage();
    const auto& a = anchor.value(p).storage();
    const auto& f = fisher.values.value(p).storage();
    auto& g = out.grad[p].storage();
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double d = t[i] - a[i];
      out.value += 0.5 * lambda * f[i] * d * d;
      g[i] = lambda * f[i] * d;
    }
  }
  return out;
}

double ewc_loss(double base_loss, const nk::ParamStore& theta, const nk::ParamStore& anchor, const FisherDiag& fisher,
                double lambda) {
  return base_loss + ewc_penalty(theta, anchor, fisher, lambda).value;
}

GemProjection gem_project(std::span<const double> g, std::span<const double> g_mem) {
  if (g.size() != g_mem.size()) throw ShapeError("GEM projection needs gradients of equal length");
  GemProjection out;
  out.gradient.assign(g.begin(), g.end());
  double dot = 0.0;
  double mm = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    dot += g[i] * g_mem[i];
    mm += g_mem[i] * g_mem[i];
  }
  if (dot >= 0.0 || mm == 0.0) return out;
  const double c = dot / mm;
  for (std::size_t i = 0; i < g.size(); ++i) out.gradient[i] -= c * g_mem[i];
  out.projected = true;
  return out;
}

EpisodicMemory EpisodicMemory::sample(const corpus::Corpus& source, double fraction, std::uint64_t seed,
                                      std::vector<std::size_t> pairs) {
  if (source.dialogues.empty()) throw ConfigError("episodic memory needs a non-empty source corpus");
  return EpisodicMemory(corpus::sample_dialogues(source, fraction, seed), std::move(pairs));
}

EpisodicMemory::EpisodicMemory(corpus::Corpus dialogues, std::vector<std::size_t> pairs)
    : dialogues_(std::move(dialogues)), pairs_(std::move(pairs)) {
  if (dialogues_.dialogues.empty()) throw ConfigError("episodic memory cannot be empty");
  for (std::size_t j : pairs_) {
    if (j >= dialogues_.registry.size()) throw ConfigError("episodic memory pair index out of range");
  }
}

nlohmann::json fisher_to_json(const FisherDiag& fisher, const nk::ParamStore& anchor) {
  require_matching(anchor, fisher.values, "EWC Fisher");
  nlohmann::json params = nlohmann::json::array();
  for (std::size_t i = 0; i < anchor.size(); ++i) {
    params.push_back({{"name", anchor.name(i)},
                      {"fisher", model::tensor_to_json(fisher.values.value(i))},
                      {"anchor", model::tensor_to_json(anchor.value(i))}});
  }
  return {{"samples", fisher.samples}, {"params", params}};
}

EwcState ewc_from_json(const nlohmann::json& j) {
  EwcState s;
  try {
    s.fisher.samples = j.at("samples").get<std::size_t>();
    for (const auto& p : j.at("params")) {
      const auto name = p.at("name").get<std::string>();
      s.anchor.add(name, model::tensor_from_json(p.at("anchor")));
      s.fisher.values.add(name, model::tensor_from_json(p.at("fisher")));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed EWC state: ") + e.what());
  } catch (const CheckpointError& e) {
    throw ConfigError(std::string("malformed EWC state: ") + e.what());
  }
  return s;
}

nlohmann::json memory_to_json(const EpisodicMemory& memory) {
  return {{"pairs", memory.pairs()}, {"corpus", nlohmann::json::parse(corpus::dump_corpus(memory.dialogues()))}};
}

EpisodicMemory memory_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("corpus") || !j.contains("pairs")) {
    throw ConfigError("malformed GEM memory: expected 'pairs' and 'corpus'");
  }
  try {
    return EpisodicMemory(corpus::parse_corpus(j.at("corpus").dump()),
                          j.at("pairs").get<std::vector<std::size_t>>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed GEM memory: ") + e.what());
  } catch (const ParseError& e) {
    throw ConfigError(std::string("malformed GEM memory: ") + e.what());
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("malformed GEM memory: ") + e.what());
  }
}

Strategy parse_strategy(const std::string& name) {
  if (name == "naive") return Strategy::kNaive;
  if (name == "ewc") return Strategy::kEwc;
  if (name == "gem") return Strategy::kGem;
  throw ConfigError("unknown fine-tuning strategy '" + name + "' (naive, ewc, gem)");
}

const char* strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kNaive:
      return "naive";
    case Strategy::kEwc:
      return "ewc";
    case Strategy::kGem:
      return "gem";
  }
  return "?";
}

FinetuneResult finetune(model::TradeModel& model, const std::vector<model::Sample>& target,
                        const FinetuneConfig& config, const EwcState* ewc, const EpisodicMemory* memory,
                        const model::Validator& validate_target, const model::Validator& validate_source) {
  model::GradientHook hook;
  std::vector<model::Sample> memory_samples;
  if (config.strategy == Strategy::kEwc) {
    if (!ewc) throw ConfigError("EWC fine-tuning needs a Fisher diagonal in the checkpoint");
    if (!(config.lambda >= 0.0)) throw ConfigError("EWC lambda must be non-negative");
    try {
      require_matching(model.params(), ewc->anchor, "EWC anchor");
      require_matching(model.params(), ewc->fisher.values, "EWC Fisher");
    } catch (const ShapeError& e) {
      throw ConfigError(e.what());
    }
    const double lambda = config.lambda;
    hook = [ewc, lambda](const model::TradeModel& m, nk::Gradients& grads, model::LossParts& loss) {
      EwcPenalty p = ewc_penalty(m.params(), ewc->anchor, ewc->fisher, lambda);
      grads.add(p.grad);
      loss.total += p.value;
    };
  } else if (config.strategy == Strategy::kGem) {
    if (!memory) throw ConfigError("GEM fine-tuning needs an episodic memory in the checkpoint");
    memory_samples = model::make_samples(model, memory->dialogues(), memory->pairs());
    hook = [&memory_samples](const model::TradeModel& m, nk::Gradients& grads, model::LossParts&) {
      nk::Gradients mem = model::batch_loss(m, memory_samples, model::ForwardOptions{}).grads;
      const std::vector<double> g = grads.flatten();
      const std::vector<double> gm = mem.flatten();
      GemProjection p = gem_project(g, gm);
      if (p.projected) grads.assign_flat(p.gradient);
    };
  }

  FinetuneResult result;
  result.target_before = validate_target(model);
  result.source_before = validate_source(model);
  result.train = model::train(model, target, config.train, validate_target, hook, [&](const model::EpochLog& log) {
    result.epochs.push_back(FinetuneEpoch{log, validate_source(model)});
  });
  result.target_after = validate_target(model);
  result.source_after = validate_source(model);
  return result;
}

}  // namespace trade::continual
