#include "trade/model/model.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <map>

#include "trade/errors.hpp"
#include "trade/numkit/ops.hpp"
#include "trade/rng.hpp"

namespace trade::model {

namespace nk = numkit;
using corpus::Vocabulary;
using nk::Tensor;

namespace names {
constexpr const char* kEmbedding = "embedding";
constexpr const char* kEncFwdW = "encoder.fwd.W";
constexpr const char* kEncFwdU = "encoder.fwd.U";
constexpr const char* kEncFwdB = "encoder.fwd.b";
constexpr const char* kEncBwdW = "encoder.bwd.W";
constexpr const char* kEncBwdU = "encoder.bwd.U";
constexpr const char* kEncBwdB = "encoder.bwd.b";
constexpr const char* kDecW = "decoder.W";
constexpr const char* kDecU = "decoder.U";
constexpr const char* kDecB = "decoder.b";
constexpr const char* kOutProj = "output.proj";
constexpr const char* kCopyGate = "copy_gate.W1";
constexpr const char* kSlotGate = "slot_gate.Wg";
constexpr const char* kDomainEmb = "domain_embedding";
constexpr const char* kSlotEmb = "slot_embedding";
}  // namespace names

void ModelConfig::validate() const {
  if (emb_dim == 0 || hidden_dim == 0) throw ConfigError("emb_dim and hidden_dim must be positive");
  if (hidden_dim % 2 != 0) throw ConfigError("hidden_dim must be even (two encoder directions)");
  if (max_decode_len == 0) throw ConfigError("max_decode_len must be positive");
  if (alpha < 0.0 || beta < 0.0) throw ConfigError("alpha and beta must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must be in [0, 1)");
  if (!(word_dropout >= 0.0 && word_dropout < 1.0)) throw ConfigError("word_dropout must be in [0, 1)");
  if (!(embedding_init_std > 0.0)) throw ConfigError("embedding_init_std must be positive");
}

namespace {

struct ExpectedShapes {
  std::vector<std::pair<std::string, nk::Shape>> entries;
};

ExpectedShapes expected_shapes(const ModelConfig& c, std::size_t vocab, std::size_t domains, std::size_t slots) {
  const std::size_t h = c.hidden_dim;
  const std::size_t he = h / 2;
  ExpectedShapes s;
  s.entries = {
      {names::kEmbedding, {vocab, c.emb_dim}},
      {names::kEncFwdW, {3 * he, c.emb_dim}},
      {names::kEncFwdU, {3 * he, he}},
      {names::kEncFwdB, {3 * he}},
      {names::kEncBwdW, {3 * he, c.emb_dim}},
      {names::kEncBwdU, {3 * he, he}},
      {names::kEncBwdB, {3 * he}},
      {names::kDecW, {3 * h, c.emb_dim}},
      {names::kDecU, {3 * h, h}},
      {names::kDecB, {3 * h}},
  };
  if (c.emb_dim != c.hidden_dim) s.entries.push_back({names::kOutProj, {c.emb_dim, h}});
  s.entries.push_back({names::kCopyGate, {1, h + c.emb_dim + h}});
  s.entries.push_back({names::kSlotGate, {corpus::kGateClasses, h}});
  s.entries.push_back({names::kDomainEmb, {domains, c.emb_dim}});
  s.entries.push_back({names::kSlotEmb, {slots, c.emb_dim}});
  return s;
}

Tensor dropout_mask(std::size_t n, double rate, Rng& rng) {
  Tensor m(nk::Shape{n});
  std::bernoulli_distribution keep(1.0 - rate);
  const double scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < n; ++i) m[i] = keep(rng) ? scale : 0.0;
  return m;
}

std::size_t argmax(const Tensor& t) {
  return static_cast<std::size_t>(std::max_element(t.storage().begin(), t.storage().end()) - t.storage().begin());
}

}  // namespace

TradeModel::TradeModel(ModelConfig config, corpus::Vocabulary vocab, corpus::SlotRegistry registry,
                       std::uint64_t init_seed)
    : config_(config), vocab_(std::move(vocab)), registry_(std::move(registry)) {
  config_.validate();
  if (registry_.size() == 0) throw ConfigError("model needs at least one (domain, slot) pair");
  init_params(init_seed);
}

TradeModel::TradeModel(ModelConfig config, corpus::Vocabulary vocab, corpus::SlotRegistry registry,
                       numkit::ParamStore params)
    : config_(config), vocab_(std::move(vocab)), registry_(std::move(registry)), params_(std::move(params)) {
  config_.validate();
  check_params();
}

void TradeModel::init_params(std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> emb(0.0, config_.embedding_init_std);
  const auto shapes =
      expected_shapes(config_, vocab_.size(), registry_.domains().size(), registry_.slot_names().size());
  for (const auto& [name, shape] : shapes.entries) {
    Tensor t(shape);
    if (name == names::kEmbedding || name == names::kDomainEmb || name == names::kSlotEmb) {
      for (double& x : t.storage()) x = emb(rng);
    } else if (name.ends_with(".b")) {
      // zero bias
    } else {
      // Uniform(-1/sqrt(fan), 1/sqrt(fan)); recurrent matrices use their own width.
      const double fan = static_cast<double>(shape.size() == 2 ? shape[1] : shape[0]);
      std::uniform_real_distribution<double> u(-1.0 / std::sqrt(fan), 1.0 / std::sqrt(fan));
      for (double& x : t.storage()) x = u(rng);
    }
    params_.add(name, std::move(t));
  }
}

void TradeModel::check_params() const {
  const auto shapes =
      expected_shapes(config_, vocab_.size(), registry_.domains().size(), registry_.slot_names().size());
  if (params_.size() != shapes.entries.size()) {
    throw CheckpointError("parameter count " + std::to_string(params_.size()) + " does not match the model layout (" +
                          std::to_string(shapes.entries.size()) + ")");
  }
  for (const auto& [name, shape] : shapes.entries) {
    auto i = params_.find(name);
    if (!i) throw CheckpointError("missing parameter tensor '" + name + "'");
    if (params_.value(*i).shape() != shape) {
      throw CheckpointError("parameter '" + name + "' has shape " + nk::shape_string(params_.value(*i).shape()) +
                            ", expected " + nk::shape_string(shape));
    }
  }
  if (!params_.all_finite()) throw CheckpointError("non-finite parameter values");
}

EncodedInput TradeModel::prepare(const std::vector<std::string>& history) const {
  if (history.empty()) throw IndexError("cannot encode an empty history");
  EncodedInput in;
  in.tokens = history;
  std::map<std::string, std::size_t> oov;
  for (const auto& w : history) {
    if (auto id = vocab_.find(w)) {
      in.input_ids.push_back(*id);
      in.copy_ids.push_back(*id);
    } else {
      in.input_ids.push_back(Vocabulary::kUnk);
      auto [it, fresh] = oov.emplace(w, vocab_.size() + in.oov_words.size());
      if (fresh) in.oov_words.push_back(w);
      in.copy_ids.push_back(it->second);
    }
  }
  return in;
}

Sample TradeModel::make_sample(const std::vector<std::string>& history, const corpus::BeliefState& gold,
                               std::span<const std::size_t> pairs) const {
  Sample s;
  for (std::size_t j : pairs) {
    if (j >= registry_.size()) throw IndexError("unknown (domain, slot) pair index " + std::to_string(j));
  }
  s.pairs.assign(pairs.begin(), pairs.end());
  s.input = prepare(history);
  for (const auto& pair : registry_.pairs()) {
    auto target = corpus::gate_label_of(gold, pair);
    s.gates.push_back(target.gate);
    std::vector<std::size_t> ids;
    for (const auto& w : target.tokens) {
      if (auto id = vocab_.find(w)) {
        ids.push_back(*id);
      } else if (auto it = std::find(s.input.oov_words.begin(), s.input.oov_words.end(), w);
                 it != s.input.oov_words.end()) {
        ids.push_back(vocab_.size() + static_cast<std::size_t>(it - s.input.oov_words.begin()));
      } else {
        ids.push_back(Vocabulary::kUnk);
      }
    }
    s.targets.push_back(std::move(ids));
  }
  return s;
}

EncoderOutput TradeModel::encode(Tape& tape, const EncodedInput& input, const ForwardOptions& opts) const {
  const std::size_t n = input.input_ids.size();
  if (n == 0) throw IndexError("cannot encode an empty history");
  for (std::size_t id : input.input_ids)
    if (id >= vocab_.size()) throw IndexError("token id " + std::to_string(id) + " outside the vocabulary");

  Rng rng(derive_seed(opts.seed, "encoder-dropout"));
  std::vector<std::size_t> ids = input.input_ids;
  if (opts.training && config_.word_dropout > 0.0) {
    ids = corpus::word_dropout(ids, config_.word_dropout, derive_seed(opts.seed, "word-dropout"),
                               Vocabulary::kReservedCount, Vocabulary::kUnk);
  }
  const bool drop = opts.training && config_.dropout > 0.0;

  Var emb = tape.param(names::kEmbedding);
  std::vector<Var> embedded;
  embedded.reserve(n);
  for (std::size_t id : ids) {
    Var e = nk::row(emb, id);
    if (drop) e = nk::mask(e, dropout_mask(config_.emb_dim, config_.dropout, rng));
    embedded.push_back(e);
  }

  const std::size_t he = config_.hidden_dim / 2;
  Var fw = tape.param(names::kEncFwdW), fu = tape.param(names::kEncFwdU), fb = tape.param(names::kEncFwdB);
  Var bw = tape.param(names::kEncBwdW), bu = tape.param(names::kEncBwdU), bb = tape.param(names::kEncBwdB);
  Var zero = tape.constant(Tensor(nk::Shape{he}));

  std::vector<Var> fwd(n), bwd(n);
  Var h = zero;
  for (std::size_t i = 0; i < n; ++i) fwd[i] = h = nk::gru_cell(embedded[i], h, fw, fu, fb);
  h = zero;
  for (std::size_t i = n; i-- > 0;) bwd[i] = h = nk::gru_cell(embedded[i], h, bw, bu, bb);

  std::vector<Var> rows;
  rows.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Var r = nk::concat({fwd[i], bwd[i]});
    if (drop) r = nk::mask(r, dropout_mask(config_.hidden_dim, config_.dropout, rng));
    rows.push_back(r);
  }
  EncoderOutput out;
  out.states = nk::stack_rows(rows);
  out.final_hidden = nk::concat({fwd[n - 1], bwd[0]});
  return out;
}

Var TradeModel::vocab_dist(Tape& tape, Var h_dec) const {
  if (h_dec.value().size() != config_.hidden_dim) throw ShapeError("vocab_dist: decoder state has wrong size");
  Var proj = h_dec;
  if (config_.emb_dim != config_.hidden_dim) proj = nk::matvec(tape.param(names::kOutProj), h_dec);
  return nk::softmax(nk::matvec(tape.param(names::kEmbedding), proj));
}

std::pair<Var, Var> TradeModel::history_attention(Var h_dec, Var states) const {
  if (states.value().rank() != 2 || states.value().rows() == 0) throw ShapeError("history_attention: empty history");
  Var p = nk::softmax(nk::matvec(states, h_dec));
  Var c = nk::matvec_transposed(states, p);
  return {p, c};
}

Var TradeModel::generation_gate(Tape& tape, Var h_dec, Var w, Var context) const {
  Var x = nk::concat({h_dec, w, context});
  return nk::sigmoid(nk::pick(nk::matvec(tape.param(names::kCopyGate), x), 0));
}

Var TradeModel::mix_distributions(Var p_vocab, Var p_history, Var p_gen, std::span<const std::size_t> copy_ids,
                                  std::size_t extended_size) {
  const double g = p_gen.item();
  if (!(g >= 0.0 && g <= 1.0)) throw NumericError("p_gen outside [0, 1]");
  Var vocab_part = nk::mul_scalar(nk::pad(p_vocab, extended_size), p_gen);
  Var copy_part = nk::mul_scalar(nk::scatter_add(p_history, copy_ids, extended_size), nk::one_minus(p_gen));
  return nk::add(vocab_part, copy_part);
}

Var TradeModel::slot_gate(Tape& tape, Var context0) const {
  return nk::softmax(nk::matvec(tape.param(names::kSlotGate), context0));
}

Var TradeModel::decoder_input_embedding(Tape& tape, std::size_t extended_id) const {
  const std::size_t id = extended_id < vocab_.size() ? extended_id : Vocabulary::kUnk;
  return nk::row(tape.param(names::kEmbedding), id);
}

DecodeTrace TradeModel::decode_slot(Tape& tape, std::size_t pair, const EncoderOutput& enc, const EncodedInput& input,
                                    const std::vector<std::size_t>* target) const {
  if (pair >= registry_.size()) throw IndexError("unknown (domain, slot) pair index " + std::to_string(pair));
  if (target && target->empty()) throw ShapeError("teacher-forced decoding needs a non-empty target");
  const auto& ds = registry_.pairs()[pair];
  const std::size_t ext = input.extended_size(vocab_.size());

  Var dw = tape.param(names::kDecW), du = tape.param(names::kDecU), db = tape.param(names::kDecB);
  Var w = nk::add(nk::row(tape.param(names::kDomainEmb), ds.domain_index),
                  nk::row(tape.param(names::kSlotEmb), ds.slot_index));
  Var h = enc.final_hidden;

  DecodeTrace trace;
  const std::size_t steps = target ? target->size() : config_.max_decode_len;
  for (std::size_t k = 0; k < steps; ++k) {
    h = nk::gru_cell(w, h, dw, du, db);
    Var p_vocab = vocab_dist(tape, h);
    auto [p_hist, context] = history_attention(h, enc.states);
    if (k == 0) trace.gate = slot_gate(tape, context);
    Var p_gen = generation_gate(tape, h, w, context);
    Var p_final = mix_distributions(p_vocab, p_hist, p_gen, input.copy_ids, ext);
    trace.final_dists.push_back(p_final);
    trace.p_gen.push_back(p_gen);
    trace.attention.push_back(p_hist);

    std::size_t next = 0;
    if (target) {
      next = (*target)[k];
    } else {
      next = argmax(p_final.value());
      trace.emitted.push_back(next);
      if (next == Vocabulary::kEos) break;
    }
    if (k + 1 < steps) w = decoder_input_embedding(tape, next);
  }
  return trace;
}

Var TradeModel::example_loss(Tape& tape, const Sample& sample, const ForwardOptions& opts, LossParts* parts) const {
  if (sample.gates.size() != registry_.size() || sample.targets.size() != registry_.size()) {
    throw ShapeError("sample labels do not cover the pair registry");
  }
  EncoderOutput enc = encode(tape, sample.input, opts);
  int clamped = 0;
  std::vector<Var> gate_terms, value_terms;
  const std::vector<std::size_t> pairs = sample.pairs.empty() ? registry_.all_pairs() : sample.pairs;
  for (std::size_t j : pairs) {
    DecodeTrace trace = decode_slot(tape, j, enc, sample.input, &sample.targets[j]);
    gate_terms.push_back(nk::neg_log(nk::pick(trace.gate, static_cast<std::size_t>(sample.gates[j])), 1e-12, &clamped));
    for (std::size_t k = 0; k < trace.final_dists.size(); ++k) {
      value_terms.push_back(nk::neg_log(nk::pick(trace.final_dists[k], sample.targets[j][k]), 1e-12, &clamped));
    }
  }
  Var lg = nk::sum(gate_terms);
  Var lv = nk::sum(value_terms);
  Var loss = nk::add(nk::scale(lg, config_.alpha), nk::scale(lv, config_.beta));
  if (parts) {
    parts->gate = lg.item();
    parts->value = lv.item();
    parts->total = loss.item();
    parts->clamped = clamped;
  }
  return loss;
}

std::string TradeModel::output_token(std::size_t extended_id, const EncodedInput& input) const {
  if (extended_id < vocab_.size()) return vocab_.token(extended_id);
  const std::size_t k = extended_id - vocab_.size();
  if (k >= input.oov_words.size()) throw IndexError("extended id out of range");
  return input.oov_words[k];
}

TurnPrediction TradeModel::predict(const std::vector<std::string>& history, std::span<const std::size_t> pairs) const {
  std::vector<std::size_t> all;
  if (pairs.empty()) {
    all = registry_.all_pairs();
    pairs = all;
  }
  Tape tape(&params_, false);
  EncodedInput input = prepare(history);
  EncoderOutput enc = encode(tape, input);
  TurnPrediction out;
  for (std::size_t j : pairs) {
    DecodeTrace trace = decode_slot(tape, j, enc, input, nullptr);
    SlotPrediction sp;
    sp.pair = j;
    sp.gate = trace.gate.value().storage();
    sp.gate_label = static_cast<GateLabel>(argmax(trace.gate.value()));
    for (std::size_t id : trace.emitted) sp.tokens.push_back(output_token(id, input));
    for (Var g : trace.p_gen) sp.p_gen.push_back(g.item());
    for (Var a : trace.attention) sp.attention.push_back(a.value().storage());

    const auto& key = registry_.pairs()[j].key;
    if (sp.gate_label == GateLabel::kDontcare) {
      out.belief[key] = {corpus::kDontcareValue};
    } else if (sp.gate_label == GateLabel::kPtr) {
      corpus::ValueTokens value = sp.tokens;
      if (!value.empty() && value.back() == corpus::kEosToken) value.pop_back();
      if (!value.empty()) out.belief[key] = std::move(value);
    }
    out.slots.push_back(std::move(sp));
  }
  return out;
}

corpus::BeliefState TradeModel::predict_belief(const std::vector<std::string>& history) const {
  return predict(history).belief;
}

BatchResult batch_loss(const TradeModel& model, std::span<const Sample> batch, const ForwardOptions& opts,
                       Execution exec) {
  if (batch.empty()) throw ConfigError("empty batch");
  const std::size_t n = batch.size();
  std::vector<nk::Gradients> per(n);
  std::vector<LossParts> parts(n);
  std::vector<std::exception_ptr> errors(n);

  auto run = [&](std::size_t i) {
    try {
      ForwardOptions o = opts;
      o.seed = derive_seed(opts.seed, "example", i);
      Tape tape(&model.params());
      Var loss = model.example_loss(tape, batch[i], o, &parts[i]);
      tape.backward(loss);
      per[i] = nk::Gradients(model.params());
      tape.accumulate_param_grads(per[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };

  if (exec == Execution::kParallel) {
    const auto count = static_cast<long>(n);
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < count; ++i) run(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < n; ++i) run(i);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  BatchResult result;
  result.grads = nk::Gradients(model.params());
  for (std::size_t i = 0; i < n; ++i) {
    result.grads.add(per[i]);
    result.loss.total += parts[i].total;
    result.loss.gate += parts[i].gate;
    result.loss.value += parts[i].value;
    result.loss.clamped += parts[i].clamped;
  }
  const double inv = 1.0 / static_cast<double>(n);
  result.grads.scale(inv);
  result.loss.total *= inv;
  result.loss.gate *= inv;
  result.loss.value *= inv;
  return result;
}

double batch_loss_value(const TradeModel& model, std::span<const Sample> batch) {
  if (batch.empty()) throw ConfigError("empty batch");
  double total = 0.0;
  for (const Sample& s : batch) {
    Tape tape(&model.params(), false);
    total += model.example_loss(tape, s, ForwardOptions{}).item();
  }
  return total / static_cast<double>(batch.size());
}

}  // namespace trade::model
