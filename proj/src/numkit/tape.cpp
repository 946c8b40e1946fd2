#include "trade/numkit/tape.hpp"

#include "trade/errors.hpp"
#include "trade/numkit/kernels.hpp"

namespace trade::numkit {

const Tensor& Var::value() const { return tape->value(*this); }

Var Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor value) {
  Node n;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::variable(Tensor value) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = record_gradients_;
  return push(std::move(n));
}

Var Tape::param(std::size_t index) {
  if (!params_ || index >= params_->size()) throw IndexError("parameter index out of range");
  if (auto it = param_nodes_.find(index); it != param_nodes_.end()) return Var{this, it->second};
  Node n;
  n.borrowed = &params_->value(index);
  n.requires_grad = record_gradients_;
  Var v = push(std::move(n));
  param_nodes_.emplace(index, v.id);
  return v;
}

Var Tape::param(const std::string& name) {
  if (!params_) throw IndexError("tape has no parameter store");
  return param(params_->index(name));
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
}

Var Tape::record(Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  const auto next = static_cast<std::uint32_t>(nodes_.size());
  bool needs = false;
  for (const Var& in : inputs) {
    if (in.tape != this) throw InternalError("op input belongs to a different tape");
    // Inputs always precede their consumer, so the tape cannot contain a cycle.
    if (in.id >= next) throw InternalError("op input recorded after its consumer");
    needs = needs || nodes_[in.id].requires_grad;
  }
  Node n;
  n.owned = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  return push(std::move(n));
}

const Tensor& Tape::value(Var v) const { return nodes_[v.id].value(); }

Tensor& Tape::grad(Var v) {
  Node& n = nodes_[v.id];
  if (n.grad.empty() && !n.value().empty()) n.grad = Tensor::zeros_like(n.value());
  return n.grad;
}

const Tensor* Tape::grad_if_any(Var v) const {
  const Node& n = nodes_[v.id];
  return n.grad.empty() ? nullptr : &n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw InternalError("loss belongs to a different tape");
  if (value(loss).size() != 1) throw ShapeError("backward() requires a scalar loss");
  grad(loss).fill(1.0);
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
    // The rule may allocate gradients of earlier nodes but never touches this one.
    Tensor out_grad = std::move(n.grad);
    n.backward(*this, out_grad);
    n.grad = std::move(out_grad);
  }
}

void Tape::accumulate_param_grads(Gradients& out) const {
  for (const auto& [index, id] : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.grad.empty()) continue;
    require_same_shape(out[index], n.grad, "accumulate_param_grads");
    kernels::axpy(1.0, n.grad.data(), out[index].data());
  }
}

}  // namespace trade::numkit
