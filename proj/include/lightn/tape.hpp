#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <optional>
#include <utility>
#include <vector>

#include "lightn/errors.hpp"
#include "lightn/matrix.hpp"

namespace lightn {

class Tape;

// Handle to a node recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  const Matrix& grad() const;
  bool has_grad() const;
  bool requires_grad() const;
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

// Reverse-mode differentiation record. Nodes are appended in evaluation order,
// so operands always precede their consumers. Single-threaded.
class Tape {
 public:
  // Called during the reverse sweep with the node's own id; reads grad_of(self)
  // and accumulates into operand buffers obtained from grad_buffer().
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = true) {
    nodes_.push_back(Node{std::move(value), std::nullopt, requires_grad, {}});
    return Var(this, nodes_.size() - 1);
  }

  Var constant(Matrix value) { return leaf(std::move(value), false); }

  // Records an operation result. The node needs a gradient iff any operand does.
  Var record(Matrix value, std::initializer_list<Var> operands, BackwardFn fn) {
    bool rg = false;
    for (const Var& v : operands) {
      check_owned(v);
      rg = rg || nodes_[v.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), std::nullopt, rg, rg ? std::move(fn) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
  }

  Var record(Matrix value, const std::vector<Var>& operands, BackwardFn fn) {
    bool rg = false;
    for (const Var& v : operands) {
      check_owned(v);
      rg = rg || nodes_[v.id()].requires_grad;
    }
    nodes_.push_back(Node{std::move(value), std::nullopt, rg, rg ? std::move(fn) : BackwardFn{}});
    return Var(this, nodes_.size() - 1);
  }

  // Reverse sweep from a scalar node; d(loss)/d(loss) = 1.
  void backward(Var loss) {
    check_owned(loss);
    const Matrix& lv = value(loss.id());
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw ContractError("backward: loss must be a 1x1 scalar node, got " + lv.shape());
    }
    grad_buffer(loss.id())[0] += 1.0;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (n.backward && n.grad) n.backward(*this, id);
    }
  }

  void zero_grad() {
    for (Node& n : nodes_) n.grad.reset();
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  const Matrix& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool has_grad(std::size_t id) const { return nodes_.at(id).grad.has_value(); }

  const Matrix& grad_of(std::size_t id) const {
    const Node& n = nodes_.at(id);
    if (!n.grad) throw ContractError("grad requested for node without a gradient buffer");
    return *n.grad;
  }

  // Gradient buffer of a node, allocated as zeros on first use.
  Matrix& grad_buffer(std::size_t id) {
    Node& n = nodes_.at(id);
    if (!n.grad) n.grad.emplace(n.value.rows(), n.value.cols(), 0.0);
    return *n.grad;
  }

  void check_owned(const Var& v) const {
    if (v.tape() != this) throw ContractError("Var belongs to a different tape");
  }

 private:
  struct Node {
    Matrix value;
    std::optional<Matrix> grad;
    bool requires_grad;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

inline const Matrix& Var::value() const {
  if (!tape_) throw ContractError("value() on an empty Var");
  return tape_->value(id_);
}
inline const Matrix& Var::grad() const {
  if (!tape_) throw ContractError("grad() on an empty Var");
  return tape_->grad_of(id_);
}
inline bool Var::has_grad() const { return tape_ && tape_->has_grad(id_); }
inline bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

// Forward multiply-accumulate counter used to validate the analytic cost model.
// Only dense products (matmul, gram) increment it.
namespace instrument {
inline thread_local std::uint64_t mac_counter = 0;

class MacScope {
 public:
  MacScope() : start_(mac_counter) {}
  std::uint64_t count() const { return mac_counter - start_; }

 private:
  std::uint64_t start_;
};
}  // namespace instrument

}  // namespace lightn
