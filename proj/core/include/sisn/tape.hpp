#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "sisn/tensor.hpp"

namespace sisn {

// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;

  bool valid() const { return id != kNone; }
  friend bool operator==(const Var&, const Var&) = default;
};

// Records operations in execution order (which is a topological order) and
// replays them in reverse to accumulate gradients.
template <typename T>
class Tape {
 public:
  // Receives the gradient of the recorded output and scatters it into the
  // gradients of the op's inputs through grad_buffer().
  using BackwardFn = std::function<void(Tape&, const Tensor<T>& out_grad)>;

  Var leaf(Tensor<T> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), std::nullopt, requires_grad, {}});
    return Var{nodes_.size() - 1};
  }

  Var constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Records the result of an op. The backward closure is kept only if some
  // input participates in differentiation.
  Var record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward) {
    return record(std::move(value), std::vector<Var>(inputs), std::move(backward));
  }

  Var record(Tensor<T> value, const std::vector<Var>& inputs, BackwardFn backward) {
    bool needs_grad = false;
    for (const Var v : inputs) needs_grad = needs_grad || node(v).requires_grad;
    nodes_.push_back(Node{std::move(value), std::nullopt, needs_grad,
                          needs_grad ? std::move(backward) : BackwardFn{}});
    return Var{nodes_.size() - 1};
  }

  const Tensor<T>& value(Var v) const { return node(v).value; }
  const Shape& shape(Var v) const { return node(v).value.shape(); }
  bool requires_grad(Var v) const { return node(v).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Accumulated gradient; zeros when v was not reached by the last backward.
  Tensor<T> grad(Var v) const {
    const Node& n = node(v);
    return n.grad ? *n.grad : Tensor<T>(n.value.shape());
  }

  // Gradient accumulator for op implementations, allocated on first use.
  Tensor<T>& grad_buffer(Var v) {
    Node& n = node(v);
    if (!n.grad) n.grad.emplace(n.value.shape());
    return *n.grad;
  }

  // Seeds d(loss)/d(loss) = 1 and propagates to every requires_grad node.
  void backward(Var loss) {
    require(value(loss).shape().is_scalar(), ErrorKind::kShapeMismatch,
            "backward requires a scalar loss, got shape " + value(loss).shape().str());
    for (auto& n : nodes_) n.grad.reset();
    if (!node(loss).requires_grad) return;
    grad_buffer(loss)[0] = T{1};
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.backward || !n.grad) continue;
      n.backward(*this, *n.grad);
    }
  }

 private:
  struct Node {
    Tensor<T> value;
    std::optional<Tensor<T>> grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Node& node(Var v) {
    require(v.id < nodes_.size(), ErrorKind::kInvalidArgument, "variable does not belong to this tape");
    return nodes_[v.id];
  }
  const Node& node(Var v) const {
    require(v.id < nodes_.size(), ErrorKind::kInvalidArgument, "variable does not belong to this tape");
    return nodes_[v.id];
  }

  std::vector<Node> nodes_;
};

}  // namespace sisn
