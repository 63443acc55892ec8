// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "pfr/gradcore/ops.hpp"
#include "pfr/nets/mlp.hpp"

namespace pfr::losses {

inline constexpr double kNormEps = 1e-8;

namespace detail {

template <std::floating_point T>
void require_batch(const BasicTensor<T>& x, const char* what) {
  if (x.rank() != 2) throw DimensionError(std::string(what) + " expects rank-2 input, got " + shape_str(x.shape()));
  if (x.rows() < 2) {
    throw DegenerateBatchError(std::string(what) + " needs a batch of at least 2 rows, got " + std::to_string(x.rows()));
  }
}

template <std::floating_point T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " differ");
  }
}

/// Row norms [B x 1]; throws when any row is (numerically) zero.
template <std::floating_point T>
BasicTensor<T> checked_row_norms(const BasicTensor<T>& x, const char* what) {
  auto n = l2norm_axis(x, 1);
  for (T v : n.values()) {
    if (!(v > T(kNormEps))) throw NumericError(std::string(what) + ": zero-norm row");
  }
  return n;
}

}  // namespace detail

/// Cross-view correlation matrix [Z x Z].
template <std::floating_point T>
struct CrossCorrelation {
  BasicTensor<T> matrix;

  std::size_t size() const { return matrix.rows(); }
};

/// C_ij = sum_b a_bi b_bj / (||a_:i|| ||b_:j||), with column norms floored at
/// 1e-8. With `standardize` the columns are first mean-centered over the
/// batch, which turns C into the Pearson correlation of the two views
/// (column scaling cancels in the ratio).
template <std::floating_point T>
CrossCorrelation<T> cross_correlation(const BasicTensor<T>& za, const BasicTensor<T>& zb, bool standardize = true) {
  detail::require_batch(za, "cross_correlation");
  detail::require_same_shape(za, zb, "cross_correlation");
  BasicTensor<T> a = za, b = zb;
  if (standardize) {
    a = sub(za, mean_axis(za, 0));
    b = sub(zb, mean_axis(zb, 0));
  }
  const auto na = clamp_min(l2norm_axis(a, 0), T(kNormEps));  // [1 x Z]
  const auto nb = clamp_min(l2norm_axis(b, 0), T(kNormEps));
  const auto numer = matmul(transpose(a), b);
  const auto denom = matmul(transpose(na), nb);
  return {div(numer, denom)};
}

/// sum_i (1 - C_ii)^2 + lambda_bt * sum_{i != j} C_ij^2.
template <std::floating_point T>
BasicTensor<T> barlow_loss(const CrossCorrelation<T>& c, T lambda_bt) {
  const auto& m = c.matrix;
  if (m.rank() != 2 || m.rows() != m.cols()) throw DimensionError("barlow_loss needs a square matrix");
  const std::size_t z = m.rows();
  const auto eye = BasicTensor<T>::eye(z);
  auto off = BasicTensor<T>::full({z, z}, T(1));
  for (std::size_t i = 0; i < z; ++i) off.mutable_values()[i * z + i] = T(0);
  const auto invariance = sum(mul(square(sub(m, eye)), eye));
  const auto redundancy = sum(mul(square(m), off));
  return add(invariance, scale(redundancy, lambda_bt));
}

/// Normalized-temperature cross-entropy over the 2B l2-normalized
/// embeddings; each row's positive is its paired view and the other 2B - 2
/// rows are negatives.
template <std::floating_point T>
BasicTensor<T> ntxent_loss(const BasicTensor<T>& za, const BasicTensor<T>& zb, T temperature = T(0.5)) {
  detail::require_batch(za, "ntxent_loss");
  detail::require_same_shape(za, zb, "ntxent_loss");
  if (!(temperature > T(0))) throw ContractError("ntxent_loss: temperature must be positive");
  const std::size_t b = za.rows();
  const auto z = concat_rows(za, zb);
  const auto zn = div(z, detail::checked_row_norms(z, "ntxent_loss"));
  const auto logits = scale(matmul(zn, transpose(zn)), T(1) / temperature);
  std::vector<std::size_t> targets(2 * b);
  for (std::size_t i = 0; i < 2 * b; ++i) targets[i] = (i + b) % (2 * b);
  return cross_entropy(logits, targets, true);
}

/// S(a, b) = -a.b / (||a|| ||b||), averaged over rows.
template <std::floating_point T>
BasicTensor<T> cosine_sim(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_same_shape(a, b, "cosine_sim");
  if (a.rank() != 2) throw DimensionError("cosine_sim expects [B x F] inputs");
  const auto dots = sum_axis(mul(a, b), 1);
  const auto na = detail::checked_row_norms(a, "cosine_sim");
  const auto nb = detail::checked_row_norms(b, "cosine_sim");
  return neg(mean(div(dots, mul(na, nb))));
}

/// Symmetrized negative cosine between predictions and stop-gradient
/// projections.
template <std::floating_point T>
BasicTensor<T> simsiam_loss(const BasicTensor<T>& pa, const BasicTensor<T>& zb, const BasicTensor<T>& pb,
                            const BasicTensor<T>& za) {
  detail::require_same_shape(pa, zb, "simsiam_loss");
  detail::require_same_shape(pb, za, "simsiam_loss");
  return scale(add(cosine_sim(pa, zb.detach()), cosine_sim(pb, za.detach())), T(0.5));
}

/// Mean over rows of ||f_t - f_prev||_2 (squared when requested). `prev`
/// is treated as a constant.
template <std::floating_point T>
BasicTensor<T> fd_loss(const BasicTensor<T>& current, const BasicTensor<T>& prev, bool squared = false) {
  detail::require_same_shape(current, prev, "fd_loss");
  if (current.rank() != 2) throw DimensionError("fd_loss expects [B x F] inputs");
  const auto diff = sub(current, prev.detach());
  if (squared) return mean(sum_axis(square(diff), 1));
  return mean(l2norm_axis(diff, 1));
}

/// Cosine alignment between temporally projected current features and the
/// previous encoder's features.
template <std::floating_point T>
BasicTensor<T> pfr_loss(const BasicTensor<T>& projected, const BasicTensor<T>& prev) {
  return cosine_sim(projected, prev.detach());
}

/// Diagonal Fisher importances and anchor values for a set of named
/// parameters.
template <std::floating_point T>
struct FisherDiag {
  std::vector<std::string> names;
  std::vector<std::vector<T>> importance;
  std::vector<std::vector<T>> anchor;

  bool empty() const noexcept { return names.empty(); }

  /// Adds `other` to the importances and moves the anchors to other's.
  void consolidate(const FisherDiag& other) {
    if (empty()) {
      *this = other;
      return;
    }
    if (names != other.names) throw ContractError("FisherDiag::consolidate: parameter sets differ");
    for (std::size_t p = 0; p < names.size(); ++p) {
      for (std::size_t i = 0; i < importance[p].size(); ++i) importance[p][i] += other.importance[p][i];
      anchor[p] = other.anchor[p];
    }
  }
};

/// Mean over `n_batches` of the squared gradient of `batch_loss(b)` for each
/// parameter; the anchors are the parameter values at call time.
template <std::floating_point T>
FisherDiag<T> estimate_fisher(const std::vector<nets::NamedTensor<T>>& params,
                              const std::function<BasicTensor<T>(std::size_t)>& batch_loss, std::size_t n_batches) {
  if (n_batches == 0) throw ConfigError("estimate_fisher needs at least one batch");
  FisherDiag<T> out;
  for (const auto& p : params) {
    out.names.push_back(p.name);
    out.importance.emplace_back(p.tensor.numel(), T(0));
    out.anchor.emplace_back(p.tensor.values().begin(), p.tensor.values().end());
  }
  for (std::size_t b = 0; b < n_batches; ++b) {
    for (const auto& p : params) {
      auto t = p.tensor;
      t.clear_grad();
    }
    backward(batch_loss(b));
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (!params[k].tensor.has_grad()) continue;
      const auto g = params[k].tensor.grad();
      for (std::size_t i = 0; i < g.size(); ++i) out.importance[k][i] += g[i] * g[i];
    }
  }
  for (auto& imp : out.importance)
    for (auto& v : imp) v /= static_cast<T>(n_batches);
  for (const auto& p : params) {
    auto t = p.tensor;
    t.clear_grad();
  }
  return out;
}

/// 1/2 sum_i F_i (theta_i - theta*_i)^2.
template <std::floating_point T>
BasicTensor<T> ewc_penalty(const std::vector<nets::NamedTensor<T>>& params, const FisherDiag<T>& fisher) {
  if (params.size() != fisher.names.size()) throw DimensionError("ewc_penalty: parameter count mismatch");
  BasicTensor<T> total;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& p = params[k].tensor;
    if (params[k].name != fisher.names[k] || p.numel() != fisher.importance[k].size()) {
      throw DimensionError("ewc_penalty: parameter '" + params[k].name + "' does not match the Fisher entry");
    }
    const auto f = BasicTensor<T>::from_data(p.shape(), fisher.importance[k]);
    const auto anchor = BasicTensor<T>::from_data(p.shape(), fisher.anchor[k]);
    const auto term = sum(mul(f, square(sub(p, anchor))));
    total = total.defined() ? add(total, term) : term;
  }
  if (!total.defined()) return BasicTensor<T>::scalar(T(0));
  return scale(total, T(0.5));
}

}  // namespace pfr::losses
