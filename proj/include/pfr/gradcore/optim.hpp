// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "pfr/gradcore/schedule.hpp"
#include "pfr/gradcore/tensor.hpp"

namespace pfr {

namespace detail {

template <std::floating_point T>
void require_grads(std::span<BasicTensor<T>> params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].has_grad()) {
      throw ContractError("optimizer step: parameter " + std::to_string(i) + " of shape " +
                          shape_str(params[i].shape()) + " has no gradient");
    }
  }
}

/// Per-parameter buffers keyed by tensor identity.
template <std::floating_point T>
class SlotMap {
 public:
  std::vector<T>& get(const BasicTensor<T>& p, std::size_t slot) {
    auto& entry = slots_[p.impl()];
    if (!entry.owner) entry.owner = p.shared_impl();
    if (slot >= entry.buffers.size()) throw ContractError("optimizer slot out of range");
    if (entry.buffers[slot].size() != p.numel()) entry.buffers[slot].assign(p.numel(), T(0));
    return entry.buffers[slot];
  }
  std::size_t size() const { return slots_.size(); }

 private:
  struct Entry {
    std::shared_ptr<TensorImpl<T>> owner;  // pins the address used as key
    std::array<std::vector<T>, 2> buffers;
  };
  std::map<const TensorImpl<T>*, Entry> slots_;
};

}  // namespace detail

/// SGD with heavy-ball momentum and L2 weight decay folded into the gradient.
template <std::floating_point T>
class Sgd {
 public:
  explicit Sgd(T momentum = T(0.9), T weight_decay = T(1e-4)) : momentum_(momentum), weight_decay_(weight_decay) {}

  void step(std::span<BasicTensor<T>> params, T lr) {
    detail::require_grads(params);
    for (auto& p : params) {
      auto w = p.mutable_values();
      auto g = p.mutable_grad();
      auto& buf = momentum_ != T(0) ? slots_.get(p, 0) : scratch_;
      for (std::size_t i = 0; i < w.size(); ++i) {
        T d = g[i] + weight_decay_ * w[i];
        if (momentum_ != T(0)) {
          buf[i] = momentum_ * buf[i] + d;
          d = buf[i];
        }
        w[i] -= lr * d;
      }
      p.zero_grad();
    }
    ++steps_;
  }

  std::size_t steps() const noexcept { return steps_; }
  T momentum() const noexcept { return momentum_; }
  T weight_decay() const noexcept { return weight_decay_; }

 private:
  T momentum_;
  T weight_decay_;
  detail::SlotMap<T> slots_;
  std::vector<T> scratch_;
  std::size_t steps_ = 0;
};

/// Adam with bias-corrected moment estimates.
template <std::floating_point T>
class Adam {
 public:
  explicit Adam(T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8), T weight_decay = T(0))
      : beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void step(std::span<BasicTensor<T>> params, T lr) {
    detail::require_grads(params);
    ++steps_;
    const T c1 = T(1) - std::pow(beta1_, static_cast<T>(steps_));
    const T c2 = T(1) - std::pow(beta2_, static_cast<T>(steps_));
    for (auto& p : params) {
      auto w = p.mutable_values();
      auto g = p.mutable_grad();
      auto& m = slots_.get(p, 0);
      auto& v = slots_.get(p, 1);
      for (std::size_t i = 0; i < w.size(); ++i) {
        const T d = g[i] + weight_decay_ * w[i];
        m[i] = beta1_ * m[i] + (T(1) - beta1_) * d;
        v[i] = beta2_ * v[i] + (T(1) - beta2_) * d * d;
        w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
      }
      p.zero_grad();
    }
  }

  std::size_t steps() const noexcept { return steps_; }

 private:
  T beta1_, beta2_, eps_, weight_decay_;
  detail::SlotMap<T> slots_;
  std::size_t steps_ = 0;
};

/// Applies one optimizer update at the schedule's rate for `step_index`.
template <class Optimizer, std::floating_point T>
void step(Optimizer& optimizer, std::span<BasicTensor<T>> params, const LRSchedule& schedule,
          std::size_t step_index) {
  optimizer.step(params, static_cast<T>(schedule.rate(step_index)));
}

}  // namespace pfr
