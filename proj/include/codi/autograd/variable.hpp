// Copyright 2026 The codi-iqa Authors. All rights reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Reverse-mode automatic differentiation over Tensor<T>.
//
// Every differentiable op produces a Var whose node remembers its inputs and
// a closure that pushes the node's gradient back into them. The tape is
// recorded only while grad mode is on and at least one input requires a
// gradient, so inference under NoGradGuard allocates no graph at all.

#include <functional>
#include <memory>
#include <unordered_set>
#include <utility>
#include <vector>

#include "codi/core/tensor.hpp"

namespace codi {

class GradMode {
 public:
  static bool enabled() noexcept { return flag(); }
  static void set(bool on) noexcept { flag() = on; }

 private:
  static bool& flag() noexcept {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set(false); }
  ~NoGradGuard() { GradMode::set(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // empty until something flows in
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  Tensor<T>& grad_buffer() {
    if (grad.numel() != value.numel() || grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return grad;
  }
  bool is_leaf() const { return !backward; }
};

template <typename T>
class Var {
 public:
  Var() : node_(std::make_shared<Node<T>>()) {}
  explicit Var(Tensor<T> value, bool requires_grad = false) : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }

  const Tensor<T>& value() const { return node_->value; }
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  Tensor<T>& mutable_grad() { return node_->grad_buffer(); }
  bool has_grad() const { return node_->grad.numel() == node_->value.numel() && !node_->grad.empty(); }
  const Shape& shape() const { return node_->value.shape(); }
  int64_t dim(int i) const { return node_->value.dim(i); }
  int64_t numel() const { return node_->value.numel(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad() { node_->grad = Tensor<T>(); }

  /// A new leaf sharing no graph history with this one.
  Var detach() const { return Var(node_->value, false); }

  const std::shared_ptr<Node<T>>& node() const { return node_; }
  bool same_node(const Var& o) const { return node_ == o.node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

/// Builds an op result. The closure receives the result node; its inputs are
/// result.inputs in the same order they were passed here.
template <typename T, typename Backward>
Var<T> make_result(Tensor<T> value, std::initializer_list<Var<T>> inputs, Backward&& backward) {
  Var<T> out(std::move(value));
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& v : inputs) node.inputs.push_back(v.node());
  node.backward = std::forward<Backward>(backward);
  return out;
}

template <typename T, typename Backward>
Var<T> make_result(Tensor<T> value, const std::vector<Var<T>>& inputs, Backward&& backward) {
  Var<T> out(std::move(value));
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& v : inputs) any = any || v.requires_grad();
  if (!any) return out;
  auto& node = *out.node();
  node.requires_grad = true;
  for (const auto& v : inputs) node.inputs.push_back(v.node());
  node.backward = std::forward<Backward>(backward);
  return out;
}

/// Gradient sink for input `i` of `node`, or nullptr when it needs none.
template <typename T>
T* grad_sink(Node<T>& node, size_t i) {
  auto& in = node.inputs[i];
  if (!in->requires_grad) return nullptr;
  return in->grad_buffer().data();
}

/// Back-propagates from `root`, seeding with `seed` (ones when empty).
/// Intermediate graph state is released as it is consumed.
template <typename T>
void backward(const Var<T>& root, Tensor<T> seed = {}) {
  if (!root.requires_grad()) return;
  // Strong references: releasing a node's inputs below must not free nodes
  // that are still waiting in the order.
  std::vector<std::shared_ptr<Node<T>>> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<std::shared_ptr<Node<T>>, size_t>> stack{{root.node(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->inputs.size()) {
      std::shared_ptr<Node<T>> child = top.first->inputs[top.second++];
      if (child->requires_grad && !seen.count(child.get())) {
        seen.insert(child.get());
        stack.push_back({std::move(child), 0});
      }
    } else {
      order.push_back(std::move(top.first));
      stack.pop_back();
    }
  }
  Node<T>& r = *root.node();
  if (seed.empty()) {
    r.grad_buffer().fill(T(1));
  } else {
    require<ShapeError>(seed.shape() == r.value.shape(), "backward seed shape mismatch");
    r.grad = std::move(seed);
  }
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node<T>* n = it->get();
    if (n->is_leaf()) continue;
    if (!n->grad.empty()) n->backward(*n);
    n->backward = nullptr;
    n->inputs.clear();
    if (n != &r) n->grad = Tensor<T>();
    it->reset();
  }
}

}  // namespace codi
