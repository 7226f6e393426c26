#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "rfsep/error.hpp"

namespace rfsep::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? ", " : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {

inline bool& grad_mode_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

inline std::uint64_t next_node_id() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::uint64_t id = next_node_id();
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return parents.empty(); }
};

}  // namespace detail

/// Handle to a node of the computation graph. Copies share storage; use
/// clone() for a deep, detached copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    validate_shape(shape);
    const std::size_t n = numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    validate_shape(shape);
    if (numel(shape) != data.size()) {
      throw Error(ErrorCode::shape_mismatch, "shape " + shape_string(shape) + " holds " +
                                                 std::to_string(numel(shape)) + " values, got " +
                                                 std::to_string(data.size()));
    }
    return Tensor(std::move(shape), std::move(data), requires_grad);
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return from({1}, {value}, requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t size() const { return node_->data.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  std::uint64_t node_id() const { return node_->id; }
  bool is_leaf() const { return node_->is_leaf(); }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  std::span<double> grad() { return node_->grad; }
  std::span<const double> grad() const { return node_->grad; }

  double item() const {
    if (size() != 1) throw Error(ErrorCode::shape_mismatch, "item() on non-scalar tensor");
    return node_->data[0];
  }

  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  // Toggling only makes sense on leaves; interior nodes derive it from parents.
  void set_requires_grad(bool value) { node_->requires_grad = value; }

  Tensor clone(bool requires_grad) const {
    return Tensor(node_->shape, node_->data, requires_grad);
  }

  Tensor detach() const { return clone(false); }

  // Internal: build an interior node. Used by the op implementations.
  static Tensor make_result(Shape shape, std::vector<double> data,
                            std::vector<Tensor> const& parents,
                            std::function<void(detail::Node&)> backward_fn) {
    Tensor out(std::move(shape), std::move(data), false);
    bool needs = false;
    if (detail::grad_mode_enabled()) {
      for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    if (needs) {
      out.node_->requires_grad = true;
      out.node_->parents.reserve(parents.size());
      for (const auto& p : parents) out.node_->parents.push_back(p.node_);
      out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
  }

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  Tensor(Shape shape, std::vector<double> data, bool requires_grad)
      : node_(std::make_shared<detail::Node>()) {
    node_->shape = std::move(shape);
    node_->grad.assign(data.size(), 0.0);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
  }

  static void validate_shape(const Shape& shape) {
    if (shape.empty()) throw Error(ErrorCode::invalid_argument, "tensor shape must be non-empty");
    for (auto extent : shape) {
      if (extent == 0) {
        throw Error(ErrorCode::invalid_argument,
                    "tensor extents must be positive, got " + shape_string(shape));
      }
    }
  }

  std::shared_ptr<detail::Node> node_;
};

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_mode_enabled()) { detail::grad_mode_enabled() = false; }
  ~NoGradGuard() { detail::grad_mode_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

inline bool all_finite(std::span<const double> values) {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

/// Reverse-mode sweep from a scalar. Interior gradients are recomputed on
/// every call; leaf gradients accumulate until zero_grad().
inline void backward(Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw Error(ErrorCode::shape_mismatch, "backward() requires a scalar loss");
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS; the result is a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<const detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(&loss.node(), 0);
  visited.insert(&loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (!node->is_leaf()) std::fill(node->grad.begin(), node->grad.end(), 0.0);
  }
  loss.node().grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (!node->is_leaf() && node->backward_fn) node->backward_fn(*node);
  }
}

}  // namespace rfsep::ad
