#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "trade/corpus/corpus.hpp"
#include "trade/corpus/vocabulary.hpp"
#include "trade/numkit/params.hpp"
#include "trade/numkit/tape.hpp"

namespace trade::model {

using corpus::GateLabel;
using numkit::Tape;
using numkit::Var;

struct ModelConfig {
  std::size_t emb_dim = 400;
  std::size_t hidden_dim = 400;
  std::size_t max_decode_len = 10;
  /// Turns of history before the current one; corpus::kAllTurns for all.
  std::size_t history_window = corpus::kAllTurns;
  double dropout = 0.2;
  double word_dropout = 0.1;
  double alpha = 1.0;
  double beta = 1.0;
  /// Std-dev of the normal init for the word, domain and slot embeddings.
  double embedding_init_std = 0.1;

  /// Throws ConfigError on non-positive or odd hidden_dim, negative weights
  /// or dropout outside [0, 1).
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

/// A history turned into ids. `input_ids` index the embedding table (OOV ->
/// <unk>); `copy_ids` index the extended output space, where the k-th
/// distinct OOV word in the history gets id |V| + k.
struct EncodedInput {
  std::vector<std::string> tokens;
  std::vector<std::size_t> input_ids;
  std::vector<std::size_t> copy_ids;
  std::vector<std::string> oov_words;

  std::size_t extended_size(std::size_t vocab_size) const { return vocab_size + oov_words.size(); }
};

/// One training example: a history and the gold label for every registered pair.
struct Sample {
  EncodedInput input;
  std::vector<GateLabel> gates;
  /// Extended-id target sequence per pair, ending in <eos>.
  std::vector<std::vector<std::size_t>> targets;
  /// Pairs that contribute to the loss; empty means every pair.
  std::vector<std::size_t> pairs;
};

struct EncoderOutput {
  Var states;        // |X_t| x d_hdd
  Var final_hidden;  // d_hdd, initial decoder state
};

struct SlotPrediction {
  std::size_t pair = 0;
  std::vector<double> gate;  // [ptr, none, dontcare]
  GateLabel gate_label = GateLabel::kNone;
  std::vector<std::string> tokens;  // greedy output, including <eos> when emitted
  std::vector<double> p_gen;
  std::vector<std::vector<double>> attention;  // per step, over history positions
};

struct TurnPrediction {
  corpus::BeliefState belief;
  std::vector<SlotPrediction> slots;
};

/// Decoder run for one pair. In teacher-forced mode `steps` holds the output
/// distribution at each target position.
struct DecodeTrace {
  std::vector<Var> final_dists;
  std::vector<Var> p_gen;
  std::vector<Var> attention;
  Var gate;
  std::vector<std::size_t> emitted;  // extended ids (greedy mode)
};

struct LossParts {
  double total = 0.0;
  double gate = 0.0;
  double value = 0.0;
  int clamped = 0;
};

/// Per-example dropout switches; default is evaluation mode.
struct ForwardOptions {
  bool training = false;
  std::uint64_t seed = 0;
};

/// The TRADE network: bi-GRU utterance encoder, GRU state generator with
/// soft-gated copy over the history, and the context-enhanced slot gate. All
/// weights are shared across (domain, slot) pairs; pair j only changes the
/// first decoder input, domain_emb[d_j] + slot_emb[s_j].
class TradeModel {
 public:
  TradeModel(ModelConfig config, corpus::Vocabulary vocab, corpus::SlotRegistry registry, std::uint64_t init_seed);
  /// Adopts existing parameters (checkpoint load). Throws CheckpointError if
  /// any tensor is missing or mis-shaped.
  TradeModel(ModelConfig config, corpus::Vocabulary vocab, corpus::SlotRegistry registry, numkit::ParamStore params);

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  const corpus::Vocabulary& vocab() const { return vocab_; }
  const corpus::SlotRegistry& registry() const { return registry_; }
  numkit::ParamStore& params() { return params_; }
  const numkit::ParamStore& params() const { return params_; }

  EncodedInput prepare(const std::vector<std::string>& history) const;
  /// Labels every pair; only `pairs` (empty = all) are supervised.
  Sample make_sample(const std::vector<std::string>& history, const corpus::BeliefState& gold,
                     std::span<const std::size_t> pairs = {}) const;

  // ---- forward pieces; every Var lives on `tape`, which must be bound to params()
  EncoderOutput encode(Tape& tape, const EncodedInput& input, const ForwardOptions& opts = {}) const;
  /// Softmax(E . proj(h_dec)) over the fixed vocabulary.
  Var vocab_dist(Tape& tape, Var h_dec) const;
  /// (P_history, context) = (Softmax(H h_dec), P_history^T H).
  std::pair<Var, Var> history_attention(Var h_dec, Var states) const;
  /// Sigmoid(W1 [h_dec; w; c]).
  Var generation_gate(Tape& tape, Var h_dec, Var w, Var context) const;
  /// p_gen * P_vocab + (1 - p_gen) * scatter(P_history -> copy ids), over the
  /// extended vocabulary. Throws NumericError if p_gen is outside [0, 1].
  static Var mix_distributions(Var p_vocab, Var p_history, Var p_gen, std::span<const std::size_t> copy_ids,
                               std::size_t extended_size);
  /// Softmax(W_g c_j0).
  Var slot_gate(Tape& tape, Var context0) const;

  /// Runs the generator for pair j. With `target`, inputs are teacher-forced
  /// and one step runs per target token; otherwise greedy until <eos> or
  /// max_decode_len.
  DecodeTrace decode_slot(Tape& tape, std::size_t pair, const EncoderOutput& enc, const EncodedInput& input,
                          const std::vector<std::size_t>* target) const;

  /// alpha * L_g + beta * L_v for one example, as a scalar node.
  Var example_loss(Tape& tape, const Sample& sample, const ForwardOptions& opts, LossParts* parts = nullptr) const;

  /// Gate argmax per pair: NONE -> omitted, DONTCARE -> "dontcare", PTR ->
  /// greedy tokens with <eos> stripped (omitted if empty).
  TurnPrediction predict(const std::vector<std::string>& history, std::span<const std::size_t> pairs = {}) const;
  corpus::BeliefState predict_belief(const std::vector<std::string>& history) const;

  /// Token string for an extended id.
  std::string output_token(std::size_t extended_id, const EncodedInput& input) const;

 private:
  void init_params(std::uint64_t seed);
  void check_params() const;
  Var decoder_input_embedding(Tape& tape, std::size_t extended_id) const;

  ModelConfig config_;
  corpus::Vocabulary vocab_;
  corpus::SlotRegistry registry_;
  numkit::ParamStore params_;
};

/// Per-batch loss and summed-then-averaged gradients.
struct BatchResult {
  LossParts loss;  // averaged over the batch
  numkit::Gradients grads;
};

enum class Execution { kSerial, kParallel };

/// Mean of example_loss over `batch` and its gradient. Each example gets its
/// own tape and gradient buffer; buffers are reduced in batch order, so the
/// serial and OpenMP paths agree bitwise. Example i uses dropout seed
/// derive_seed(seed, "example", i).
BatchResult batch_loss(const TradeModel& model, std::span<const Sample> batch, const ForwardOptions& opts,
                       Execution exec = Execution::kParallel);

/// Loss only, no gradient (used by finite-difference checks and GEM).
double batch_loss_value(const TradeModel& model, std::span<const Sample> batch);

}  // namespace trade::model
