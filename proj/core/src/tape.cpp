#include "qsel/tape.hpp"

#include "qsel/errors.hpp"

namespace qsel::ad {

const Matrix& Var::value() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

const Matrix& Var::grad() const {
  if (tape_ == nullptr) throw ContractError("use of an unbound Var");
  return tape_->grad(id_);
}

Var Tape::parameter(Matrix value) {
  Node n;
  n.grad = Matrix(value.rows(), value.cols());
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.grad = Matrix(value.rows(), value.cols());
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward) {
  bool needs = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) throw ContractError("tape input refers to a future node");
    needs = needs || nodes_[in].requires_grad;
  }
  Node n;
  n.grad = Matrix(value.rows(), value.cols());
  n.value = std::move(value);
  n.inputs = std::move(inputs);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(std::size_t id) const { return nodes_.at(id).grad; }

void Tape::accumulate(std::size_t id, const Matrix& contribution) {
  Node& n = node(id);
  if (!n.requires_grad) return;
  add_in_place(n.grad, contribution);
}

Matrix& Tape::grad_accumulator(std::size_t id) {
  Node& n = node(id);
  if (!n.requires_grad) throw ContractError("gradient requested for a detached node");
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  if (swept_) throw ContractError("backward: tape was already swept");
  const Matrix& v = value(loss.id());
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("backward: loss must be 1x1, got " + shape_of(v));
  }
  swept_ = true;
  if (!requires_grad(loss.id())) return;
  node(loss.id()).grad(0, 0) = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.backward) continue;
    n.backward(*this, id);
  }
}

}  // namespace qsel::ad
