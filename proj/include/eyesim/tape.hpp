#pragma once

#include <deque>
#include <functional>
#include <utility>
#include <vector>

#include "eyesim/tensor.hpp"

namespace eyesim {

struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

inline constexpr Var kNoVar{-1};

// Append-only reverse-mode tape. Nodes whose inputs carry no gradient skip
// closure construction entirely, so frozen networks pay forward cost only.
// One tape per training step; tensors on it are immutable once pushed.
template <class T>
class Tape {
 public:
  // Receives the node's own output gradient; accumulates into parents.
  using Backprop = std::function<void(Tape&, const Tensor<T>&)>;

  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first contribution
    bool requires_grad = false;
    Backprop backprop;  // empty for leaves / no-grad nodes
  };

  Var leaf(Tensor<T> value, bool requires_grad = false) {
    return push(std::move(value), requires_grad, nullptr);
  }

  Var push(Tensor<T> value, bool requires_grad, Backprop backprop) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backprop = std::move(backprop);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int32_t>(nodes_.size() - 1)};
  }

  const Tensor<T>& val(Var v) const { return nodes_[v.id].value; }
  bool needs_grad(Var v) const { return v.valid() && nodes_[v.id].requires_grad; }

  bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }
  const Tensor<T>& grad(Var v) const { return nodes_[v.id].grad; }

  // Accumulation target; allocates zeros on first touch.
  Tensor<T>& grad_buf(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = Tensor<T>::zeros(n.value.shape);
    return n.grad;
  }

  void accum(Var v, const Tensor<T>& g) {
    if (!needs_grad(v)) return;
    Tensor<T>& buf = grad_buf(v);
    for (int64_t i = 0; i < buf.numel(); ++i) buf[i] += g[i];
  }

  void backward(Var root, T seed = T(1)) {
    require_dim(val(root).numel() == 1, "backward: root must be scalar");
    if (!needs_grad(root)) return;
    grad_buf(root)[0] += seed;
    for (int32_t i = root.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.backprop && !n.grad.empty()) n.backprop(*this, n.grad);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  // deque: references to nodes stay valid while ops append new ones
  std::deque<Node> nodes_;
};

}  // namespace eyesim
