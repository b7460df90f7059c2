#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "synthdetect/error.hpp"

namespace synthdetect {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

enum class Mode { TRAIN, EVAL };

template <class T>
class Tensor;

namespace detail {

template <class T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated for every node that requires grad
  bool requires_grad = false;
  bool is_leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> inputs;
  // Reads this->grad and accumulates into the inputs' grads.
  std::function<void(Node&)> backward;
};

}  // namespace detail

// Dense row-major array with reference semantics: copies share storage and
// graph position. Non-leaf tensors record how they were produced so
// backward() can propagate gradients to every leaf with requires_grad.
template <class T>
class Tensor {
 public:
  using value_type = T;
  using NodePtr = std::shared_ptr<detail::Node<T>>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return Tensor(std::move(shape), std::vector<T>(), requires_grad, true);
  }

  static Tensor full(Shape shape, T value, bool requires_grad = false) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.node_->data.begin(), t.node_->data.end(), value);
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> data, bool requires_grad = false) {
    if (data.size() != shape_numel(shape)) {
      throw ShapeError("tensor data length " + std::to_string(data.size()) + " does not match shape " +
                       shape_str(shape));
    }
    return Tensor(std::move(shape), std::move(data), requires_grad, false);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<T> data() { return node_->data; }
  std::span<const T> data() const { return node_->data; }
  T item() const {
    if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
    return node_->data[0];
  }

  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf; }
  std::span<T> grad() { return node_->grad; }
  std::span<const T> grad() const { return node_->grad; }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

  // Fresh leaf holding a copy of the values, detached from any graph.
  Tensor detach_copy(bool requires_grad = false) const {
    return from(shape(), node_->data, requires_grad);
  }

  const NodePtr& node() const { return node_; }

  // Builds a non-leaf result of an operation over `inputs`. The result needs a
  // gradient if any input does; otherwise no backward closure is kept.
  static Tensor make_result(Shape shape, std::vector<T> data, std::vector<Tensor> inputs,
                            std::function<void(detail::Node<T>&)> backward) {
    Tensor out = from(std::move(shape), std::move(data));
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
      auto& n = *out.node_;
      n.requires_grad = true;
      n.is_leaf = false;
      n.grad.assign(n.data.size(), T(0));
      for (auto& in : inputs) n.inputs.push_back(in.node_);
      n.backward = std::move(backward);
    }
    return out;
  }

 private:
  Tensor(Shape shape, std::vector<T> data, bool requires_grad, bool zero_fill) : node_(std::make_shared<detail::Node<T>>()) {
    node_->shape = std::move(shape);
    node_->data = zero_fill ? std::vector<T>(shape_numel(node_->shape), T(0)) : std::move(data);
    node_->requires_grad = requires_grad;
    if (requires_grad) node_->grad.assign(node_->data.size(), T(0));
  }

  NodePtr node_;
};

// Reverse-mode sweep from a scalar loss. The graph reachable from `loss` is
// ordered topologically, each node's backward runs exactly once, and the
// recorded closures are released afterwards; calling backward again on the
// same loss is a StateError. Leaf gradients accumulate (callers zero them).
template <class T>
void backward(Tensor<T>& loss) {
  if (!loss.defined()) throw ContractError("backward on an undefined tensor");
  if (loss.numel() != 1) throw ContractError("backward needs a scalar loss, got shape " + shape_str(loss.shape()));
  auto* root = loss.node().get();
  if (root->consumed) throw StateError("backward already ran for this loss; run a new forward pass first");
  if (!root->requires_grad) throw ContractError("loss does not depend on any tensor that requires grad");

  using Node = detail::Node<T>;
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && !child->is_leaf && !seen.count(child)) {
        seen.insert(child);
        stack.emplace_back(child, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // `order` is post-order: inputs before consumers. Walk it in reverse.
  root->grad.assign(1, T(1));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->consumed) throw StateError("graph node was already consumed by an earlier backward");
    if (node->backward) node->backward(*node);
  }
  for (Node* node : order) {
    node->consumed = true;
    node->backward = nullptr;
    node->inputs.clear();
  }
}

}  // namespace synthdetect
