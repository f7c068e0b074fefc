/* Copyright 2026 The dfnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Reverse-mode differentiation. Each Var owns a node in a DAG built as ops
// execute; backward() topologically sorts the DAG reachable from the root and
// runs the per-node adjoint closures in reverse order.
//
// Gradient bookkeeping is per-graph: nothing here is global except the
// thread-local grad-mode switch, so independent graphs may be built and
// differentiated on different threads.

#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "dfnet/tensor.hpp"

namespace dfnet {

struct Node;

/// Adjoint closure: receives the gradient of the node's output and the
/// node's inputs, and accumulates into each input that requires a gradient.
using BackwardFn =
    std::function<void(const Tensor& grad_out, std::span<Node* const> inputs)>;

struct Node {
  Tensor value;
  Tensor grad;  // empty until something is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;

  /// Gradient buffer, zero-initialised on first use.
  Tensor& grad_buffer();
};

/// Handle to a graph node. Copies alias the same node (like a reference).
class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  /// Direct access for optimizers and checkpoint loading; never call while a
  /// graph that reads this node is pending backward.
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const Tensor& grad() const { return node_->grad; }
  void zero_grad() { node_->grad = Tensor(); }

  /// Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

 private:
  friend Var make_result(Tensor, std::vector<Var>, BackwardFn);
  std::shared_ptr<Node> node_;
};

/// Wraps the output of an op. When grad mode is off or no input requires a
/// gradient, the result is a constant leaf and `fn` is dropped.
Var make_result(Tensor value, std::vector<Var> inputs, BackwardFn fn);

/// Back-propagates from `root`, seeding with ones (root is usually 1x1x1x1).
void backward(const Var& root);
/// Back-propagates with an explicit seed gradient of the root's shape.
void backward(const Var& root, const Tensor& seed);

bool grad_enabled();

/// Disables graph construction on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Accumulates `g` into input `node` if it tracks gradients.
inline void accumulate(Node* node, const Tensor& g) {
  if (node->requires_grad) node->grad_buffer().add_scaled(g);
}

}  // namespace dfnet
