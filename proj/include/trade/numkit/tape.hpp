#pragma once

#include <cstdint>
#include <functional>
#include <unordered_map>
#include <vector>

#include "trade/numkit/params.hpp"
#include "trade/numkit/tensor.hpp"

namespace trade::numkit {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; only valid while its tape lives.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  double item() const { return value().item(); }
  bool valid() const { return tape != nullptr; }
};

/// Define-by-run gradient tape. Nodes are appended in evaluation order, so the
/// node vector is already a topological order and backward() walks it in
/// reverse. One tape per forward pass; tapes are not shared between threads.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  /// With `record_gradients` false no backward rules are kept (inference).
  explicit Tape(const ParamStore* params = nullptr, bool record_gradients = true)
      : params_(params), record_gradients_(record_gradients) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Var constant(Tensor value);
  /// Leaf that receives a gradient (free input, e.g. in gradient checks).
  Var variable(Tensor value);
  /// Leaf bound to parameter `index` of the store; created once per tape.
  Var param(std::size_t index);
  Var param(const std::string& name);

  /// Appends an interior node. `inputs` must already live on this tape.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward);
  Var record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  /// Gradient buffer for `v`, zero-allocated on first use.
  Tensor& grad(Var v);
  /// Gradient if any flowed into `v`, otherwise nullptr.
  const Tensor* grad_if_any(Var v) const;

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded backward rule once in
  /// reverse order. `loss` must be a single-element node.
  void backward(Var loss);

  /// Adds parameter-leaf gradients into `out` (indexed like the ParamStore).
  void accumulate_param_grads(Gradients& out) const;

  std::size_t size() const { return nodes_.size(); }
  const ParamStore* params() const { return params_; }

 private:
  struct Node {
    Tensor owned;
    const Tensor* borrowed = nullptr;
    Tensor grad;
    BackwardFn backward;
    bool requires_grad = false;
    const Tensor& value() const { return borrowed ? *borrowed : owned; }
  };

  Var push(Node node);

  const ParamStore* params_;
  bool record_gradients_;
  std::vector<Node> nodes_;
  std::unordered_map<std::size_t, std::uint32_t> param_nodes_;
};

}  // namespace trade::numkit
