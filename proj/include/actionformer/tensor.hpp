// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_TENSOR_HPP
#define ACTIONFORMER_TENSOR_HPP

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

#include "actionformer/error.hpp"

namespace actionformer {

using Shape = std::vector<std::size_t>;

/// Per-position validity flags for a sequence (1 = valid, 0 = padding).
using Mask = std::vector<std::uint8_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

inline bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}

template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backward;

  std::vector<T>& ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
    return grad;
  }
};

}  // namespace detail

inline bool grad_enabled() { return detail::grad_mode_flag(); }

/// Disables graph recording for the enclosing scope (inference, optimizer updates).
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
  ~NoGradGuard() { detail::grad_mode_flag() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Dense row-major tensor with optional reverse-mode gradient tracking.
///
/// A Tensor is a shared handle: copies alias the same storage and graph node.
/// Ops never mutate their inputs; they produce new nodes that remember how
/// to push gradients back to their parents.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>, "Tensor requires a floating-point scalar");

 public:
  using value_type = T;
  using Node = detail::TensorNode<T>;

  Tensor() = default;

  explicit Tensor(Shape shape, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    node_->shape = std::move(shape);
    node_->value.assign(shape_numel(node_->shape), T(0));
    node_->requires_grad = requires_grad;
  }

  Tensor(Shape shape, std::vector<T> values, bool requires_grad = false)
      : node_(std::make_shared<Node>()) {
    require(shape_numel(shape) == values.size(), ErrorKind::kShapeMismatch,
            "tensor values do not match shape " + shape_string(shape));
    node_->shape = std::move(shape);
    node_->value = std::move(values);
    node_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), requires_grad);
  }

  static Tensor full(Shape shape, T fill, bool requires_grad = false) {
    Tensor t(std::move(shape), requires_grad);
    std::fill(t.node_->value.begin(), t.node_->value.end(), fill);
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return Tensor(Shape{}, std::vector<T>{v}, requires_grad);
  }

  /// Builds an op result. Parents are retained only when grad mode is on and
  /// at least one of them tracks gradients.
  static Tensor from_op(Shape shape, std::vector<T> values,
                        std::vector<std::shared_ptr<Node>> parents,
                        std::function<void(Node&)> backward) {
    Tensor out(std::move(shape), std::move(values));
    if (grad_enabled()) {
      const bool any = std::any_of(parents.begin(), parents.end(),
                                   [](const auto& p) { return p && p->requires_grad; });
      if (any) {
        out.node_->requires_grad = true;
        out.node_->parents = std::move(parents);
        out.node_->backward = std::move(backward);
      }
    }
    return out;
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<T> data() { return node_->value; }
  std::span<const T> data() const { return node_->value; }
  std::vector<T>& values() { return node_->value; }
  const std::vector<T>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool flag) { node_->requires_grad = flag; }
  bool has_grad() const { return !node_->grad.empty(); }

  /// Gradient buffer; allocated (zero) on first access.
  std::span<T> grad() { return node_->ensure_grad(); }
  std::span<const T> grad() const { return node_->ensure_grad(); }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    require(numel() == 1, ErrorKind::kShapeMismatch,
            "item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }

  T& at(std::size_t r, std::size_t c) { return node_->value[r * node_->shape.back() + c]; }
  T at(std::size_t r, std::size_t c) const { return node_->value[r * node_->shape.back() + c]; }

  /// Copy of the values with no graph attached.
  Tensor detach() const { return Tensor(node_->shape, node_->value); }

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Runs reverse-mode differentiation from a scalar loss. Gradients accumulate
/// into every reachable tensor that requires grad; intermediate graph links are
/// released afterwards.
template <typename T>
void backward(const Tensor<T>& loss) {
  using Node = detail::TensorNode<T>;
  require(loss.numel() == 1, ErrorKind::kShapeMismatch,
          "backward requires a scalar loss, got shape " + shape_string(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  loss.node()->ensure_grad()[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  for (Node* node : order) {
    if (node->backward) {
      node->backward = nullptr;
      node->parents.clear();
    }
  }
}

}  // namespace actionformer

#endif  // ACTIONFORMER_TENSOR_HPP
