#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <vector>

#include "qsel/matrix.hpp"

namespace qsel::ad {

class Tape;

/// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

  std::size_t id() const noexcept { return id_; }
  Tape* tape() const noexcept { return tape_; }
  bool valid() const noexcept { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Record-and-replay reverse-mode differentiation over Matrix values.
///
/// Nodes are appended in evaluation order, so the recording order is already
/// topological. A node requires a gradient iff it is a parameter or any of
/// its inputs does; constants and everything derived only from constants are
/// detached and keep a zero gradient.
///
/// One tape serves one forward/backward pass and is not thread-safe.
class Tape {
 public:
  /// Adjoint rule: reads grad(self) and accumulates into its inputs.
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  explicit Tape(std::uint64_t seed = 0) : rng_(seed) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var parameter(Matrix value);
  Var constant(Matrix value);
  Var record(Matrix value, std::vector<std::size_t> inputs, BackwardFn backward);

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }

  /// Adds contribution into the gradient of node id (no-op for detached nodes).
  void accumulate(std::size_t id, const Matrix& contribution);
  /// Mutable accumulator for in-place adjoint rules; only valid on nodes that require grad.
  Matrix& grad_accumulator(std::size_t id);

  /// Reverse sweep from a 1x1 loss node. Can be called once per tape.
  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }
  std::mt19937_64& rng() noexcept { return rng_; }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Node& node(std::size_t id) { return nodes_.at(id); }

  // deque keeps references to existing values stable while new nodes are pushed
  std::deque<Node> nodes_;
  std::mt19937_64 rng_;
  bool swept_ = false;
};

}  // namespace qsel::ad
