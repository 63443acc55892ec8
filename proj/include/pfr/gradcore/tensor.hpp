// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "pfr/errors.hpp"

namespace pfr {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

template <std::floating_point T>
class BasicTensor;

namespace detail {

template <std::floating_point T>
struct TensorImpl;

/// One recorded operation: its inputs and the rule that maps the output
/// gradient onto them.
template <std::floating_point T>
struct Node {
  const char* op = "";
  std::vector<std::shared_ptr<TensorImpl<T>>> inputs;
  std::function<void(std::span<const T>)> backward;
};

template <std::floating_point T>
struct TensorImpl {
  Shape shape;
  std::vector<T> values;
  std::optional<std::vector<T>> grad;
  bool requires_grad = false;
  std::shared_ptr<Node<T>> node;

  void accumulate_grad(std::span<const T> g) {
    if (!requires_grad) return;
    if (!grad) grad.emplace(values.size(), T(0));
    auto& dst = *grad;
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[i];
  }

  /// Accumulation entry point for backward rules that write directly.
  std::vector<T>* grad_buffer() {
    if (!requires_grad) return nullptr;
    if (!grad) grad.emplace(values.size(), T(0));
    return &*grad;
  }
};

}  // namespace detail

/// Dense row-major array with an optional gradient buffer.
///
/// A tensor is a shared handle: copies alias the same storage. Results of
/// differentiable operations carry a node linking them to their inputs; the
/// graph is walked by `backward`.
template <std::floating_point T>
class BasicTensor {
 public:
  using value_type = T;
  using Impl = detail::TensorImpl<T>;

  BasicTensor() = default;
  explicit BasicTensor(std::shared_ptr<Impl> impl) : impl_(std::move(impl)) {}

  static BasicTensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape.empty()) shape = {1};
    for (auto e : shape) {
      if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
    }
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("value count " + std::to_string(values.size()) +
                           " does not match shape " + shape_str(shape));
    }
    auto impl = std::make_shared<Impl>();
    impl->shape = std::move(shape);
    impl->values = std::move(values);
    impl->requires_grad = requires_grad;
    return BasicTensor(std::move(impl));
  }

  static BasicTensor full(Shape shape, T value, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return from_data(std::move(shape), std::vector<T>(n, value), requires_grad);
  }

  static BasicTensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), T(0), requires_grad);
  }

  static BasicTensor scalar(T value, bool requires_grad = false) {
    return from_data({1}, {value}, requires_grad);
  }

  static BasicTensor eye(std::size_t n) {
    auto t = zeros({n, n});
    for (std::size_t i = 0; i < n; ++i) t.mutable_values()[i * n + i] = T(1);
    return t;
  }

  bool defined() const noexcept { return static_cast<bool>(impl_); }

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }
  std::size_t numel() const { return impl_->values.size(); }
  std::size_t rows() const { return impl_->shape.at(0); }
  std::size_t cols() const { return impl_->shape.size() > 1 ? impl_->shape[1] : 1; }

  std::span<const T> values() const { return impl_->values; }
  /// In-place access for parameter updates. Mutating a tensor that is an
  /// input of a live graph invalidates that graph's saved values.
  std::span<T> mutable_values() { return impl_->values; }

  T item() const {
    if (numel() != 1) throw ContractError("item() on a tensor of shape " + shape_str(shape()));
    return impl_->values[0];
  }
  T at(std::size_t i) const { return impl_->values.at(i); }
  T at(std::size_t r, std::size_t c) const { return impl_->values.at(r * cols() + c); }

  bool requires_grad() const { return impl_->requires_grad; }
  BasicTensor& set_requires_grad(bool flag) {
    impl_->requires_grad = flag;
    if (!flag) impl_->grad.reset();
    return *this;
  }

  bool has_grad() const { return impl_->grad.has_value(); }
  std::span<const T> grad() const {
    if (!impl_->grad) throw ContractError("tensor has no gradient");
    return *impl_->grad;
  }
  std::span<T> mutable_grad() {
    if (!impl_->grad) throw ContractError("tensor has no gradient");
    return *impl_->grad;
  }
  void zero_grad() {
    if (impl_->grad) std::fill(impl_->grad->begin(), impl_->grad->end(), T(0));
  }
  void clear_grad() { impl_->grad.reset(); }

  /// Leaf copy of the values, disconnected from any graph.
  BasicTensor detach() const { return from_data(shape(), impl_->values, false); }

  /// Deep copy keeping the requires_grad flag but no gradient or graph.
  BasicTensor clone() const { return from_data(shape(), impl_->values, requires_grad()); }

  bool is_leaf() const { return !impl_->node; }
  const char* op_name() const { return impl_->node ? impl_->node->op : "leaf"; }

  Impl* impl() const noexcept { return impl_.get(); }
  const std::shared_ptr<Impl>& shared_impl() const noexcept { return impl_; }

 private:
  std::shared_ptr<Impl> impl_;
};

using Tensor = BasicTensor<double>;
using TensorF = BasicTensor<float>;

namespace detail {

/// Creates an op result. When any input requires a gradient the result is
/// attached to a node whose backward rule is `rule(out_grad)`.
template <std::floating_point T, class Rule>
BasicTensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                           std::initializer_list<BasicTensor<T>> inputs, Rule&& rule) {
  auto out = BasicTensor<T>::from_data(std::move(shape), std::move(values));
  bool needs_grad = false;
  for (const auto& in : inputs) needs_grad = needs_grad || in.requires_grad();
  if (needs_grad) {
    auto node = std::make_shared<Node<T>>();
    node->op = op;
    for (const auto& in : inputs) node->inputs.push_back(in.shared_impl());
    node->backward = std::forward<Rule>(rule);
    out.impl()->requires_grad = true;
    out.impl()->node = std::move(node);
  }
  return out;
}

}  // namespace detail

/// Topologically ordered record of the operations that produced a root
/// tensor. Parents always precede children in `nodes`.
template <std::floating_point T>
class BasicTape {
 public:
  using Impl = detail::TensorImpl<T>;

  static BasicTape record(const BasicTensor<T>& root) {
    BasicTape tape;
    std::unordered_set<const Impl*> seen;
    // Iterative post-order DFS; recursion depth would scale with graph depth.
    std::vector<std::pair<Impl*, std::size_t>> stack;
    stack.emplace_back(root.impl(), 0);
    seen.insert(root.impl());
    while (!stack.empty()) {
      auto& [impl, next] = stack.back();
      if (impl->node && next < impl->node->inputs.size()) {
        Impl* child = impl->node->inputs[next++].get();
        if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        continue;
      }
      tape.nodes_.push_back(impl);
      stack.pop_back();
    }
    return tape;
  }

  std::span<Impl* const> nodes() const { return nodes_; }

  /// Propagates gradients root to leaves. Interior gradients are released
  /// after use so leaves accumulate across repeated passes.
  void run_backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Impl* impl = *it;
      if (!impl->node) continue;
      if (impl->grad) {
        auto g = std::move(*impl->grad);
        impl->grad.reset();
        impl->node->backward(g);
      }
    }
  }

 private:
  std::vector<Impl*> nodes_;
};

using Tape = BasicTape<double>;

/// Accumulates d(loss)/d(leaf) into every reachable leaf that requires a
/// gradient.
template <std::floating_point T>
void backward(const BasicTensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) {
    throw ContractError("loss is not connected to any tensor that requires a gradient");
  }
  auto tape = BasicTape<T>::record(loss);
  const T seed = T(1);
  loss.impl()->accumulate_grad(std::span<const T>(&seed, 1));
  tape.run_backward();
}

template <std::floating_point T>
bool all_finite(std::span<const T> xs) {
  return std::all_of(xs.begin(), xs.end(), [](T v) { return std::isfinite(v); });
}

}  // namespace pfr
