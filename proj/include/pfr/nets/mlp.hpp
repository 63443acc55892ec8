// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pfr/gradcore/ops.hpp"
#include "pfr/util/rng.hpp"

namespace pfr::nets {

template <std::floating_point T>
struct NamedTensor {
  std::string name;
  BasicTensor<T> tensor;
};

/// Affine map x W + b with W of shape [in x out].
template <std::floating_point T>
struct Linear {
  BasicTensor<T> weight;
  BasicTensor<T> bias;

  /// Kaiming-uniform (fan-in, ReLU gain) weights and zero bias.
  static Linear kaiming(std::size_t in, std::size_t out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in));
    std::vector<T> w(in * out);
    for (auto& v : w) v = static_cast<T>(rng.uniform(-bound, bound));
    return {BasicTensor<T>::from_data({in, out}, std::move(w), true), BasicTensor<T>::zeros({1, out}, true)};
  }

  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }

  BasicTensor<T> forward(const BasicTensor<T>& x) const {
    if (x.rank() != 2 || x.cols() != in_features()) {
      throw DimensionError("linear layer expects [B x " + std::to_string(in_features()) + "], got " +
                           shape_str(x.shape()));
    }
    return add(matmul(x, weight), bias);
  }
};

template <std::floating_point T>
struct BatchNorm {
  BasicTensor<T> gamma;
  BasicTensor<T> beta;
  BatchNormStats<T> stats;

  explicit BatchNorm(std::size_t features = 0)
      : gamma(BasicTensor<T>::full({1, features}, T(1), true)),
        beta(BasicTensor<T>::zeros({1, features}, true)),
        stats(features) {}
};

/// Layer widths of a fully connected network. Hidden layers are
/// linear -> [batchnorm] -> relu; the last layer is linear only.
struct MlpSpec {
  std::vector<std::size_t> widths;
  bool batchnorm = false;

  std::size_t input_dim() const { return widths.front(); }
  std::size_t output_dim() const { return widths.back(); }
};

template <std::floating_point T>
class Mlp {
 public:
  struct Block {
    Linear<T> linear;
    std::optional<BatchNorm<T>> norm;
    bool activation = false;
  };

  Mlp() = default;

  Mlp(MlpSpec spec, Rng& rng) : spec_(std::move(spec)) {
    if (spec_.widths.size() < 2) throw ConfigError("an MLP needs at least input and output widths");
    for (auto w : spec_.widths) {
      if (w == 0) throw ConfigError("MLP widths must be positive");
    }
    for (std::size_t l = 0; l + 1 < spec_.widths.size(); ++l) {
      Block b{Linear<T>::kaiming(spec_.widths[l], spec_.widths[l + 1], rng), std::nullopt, false};
      const bool hidden = l + 2 < spec_.widths.size();
      if (hidden) {
        if (spec_.batchnorm) b.norm.emplace(spec_.widths[l + 1]);
        b.activation = true;
      }
      blocks_.push_back(std::move(b));
    }
  }

  const MlpSpec& spec() const noexcept { return spec_; }
  std::size_t input_dim() const { return spec_.input_dim(); }
  std::size_t output_dim() const { return spec_.output_dim(); }
  std::vector<Block>& blocks() noexcept { return blocks_; }
  const std::vector<Block>& blocks() const noexcept { return blocks_; }

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode) {
    check_input(x);
    BasicTensor<T> h = x;
    for (auto& b : blocks_) {
      h = b.linear.forward(h);
      if (b.norm) h = batchnorm1d(h, b.norm->gamma, b.norm->beta, b.norm->stats, mode);
      if (b.activation) h = relu(h);
    }
    return h;
  }

  /// Eval-mode forward that leaves running statistics untouched.
  BasicTensor<T> infer(const BasicTensor<T>& x) const {
    check_input(x);
    BasicTensor<T> h = x;
    for (const auto& b : blocks_) {
      h = b.linear.forward(h);
      if (b.norm) h = batchnorm1d_eval(h, b.norm->gamma, b.norm->beta, b.norm->stats);
      if (b.activation) h = relu(h);
    }
    return h;
  }

  std::vector<NamedTensor<T>> named_parameters(const std::string& prefix) const {
    std::vector<NamedTensor<T>> out;
    for (std::size_t l = 0; l < blocks_.size(); ++l) {
      const std::string p = prefix + "." + std::to_string(l) + ".";
      out.push_back({p + "weight", blocks_[l].linear.weight});
      out.push_back({p + "bias", blocks_[l].linear.bias});
      if (blocks_[l].norm) {
        out.push_back({p + "bn.gamma", blocks_[l].norm->gamma});
        out.push_back({p + "bn.beta", blocks_[l].norm->beta});
      }
    }
    return out;
  }

  std::vector<BasicTensor<T>> parameters() const {
    std::vector<BasicTensor<T>> out;
    for (auto& nt : named_parameters("")) out.push_back(nt.tensor);
    return out;
  }

  /// Deep copy with fresh storage. Gradients are not copied.
  Mlp clone() const {
    Mlp m;
    m.spec_ = spec_;
    for (const auto& b : blocks_) {
      Block c{{b.linear.weight.clone(), b.linear.bias.clone()}, std::nullopt, b.activation};
      if (b.norm) {
        BatchNorm<T> bn(b.norm->gamma.shape().back());
        bn.gamma = b.norm->gamma.clone();
        bn.beta = b.norm->beta.clone();
        bn.stats = b.norm->stats;
        c.norm = std::move(bn);
      }
      m.blocks_.push_back(std::move(c));
    }
    return m;
  }

  void set_requires_grad(bool flag) {
    for (auto& p : parameters()) p.set_requires_grad(flag);
  }

  void zero_grad() {
    for (auto& p : parameters()) p.clear_grad();
  }

 private:
  void check_input(const BasicTensor<T>& x) const {
    if (x.rank() != 2 || x.cols() != input_dim()) {
      throw DimensionError("network expects [B x " + std::to_string(input_dim()) + "] input, got " +
                           shape_str(x.shape()));
    }
  }

  MlpSpec spec_;
  std::vector<Block> blocks_;
};

}  // namespace pfr::nets
