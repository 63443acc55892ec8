// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfr/gradcore/tensor.hpp"

namespace pfr {

namespace detail {

template <std::floating_point T>
std::vector<T> copy_values(const BasicTensor<T>& x) {
  return {x.values().begin(), x.values().end()};
}

inline void require_rank2(const Shape& s, const char* op) {
  if (s.size() != 2) {
    throw DimensionError(std::string(op) + " expects a rank-2 tensor, got " + shape_str(s));
  }
}

/// Maps each output element of a broadcast to the source element it reads.
/// Operands are aligned on trailing axes; missing leading axes count as 1.
struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
  bool identity = false;
};

inline std::vector<std::size_t> broadcast_index(const Shape& out, const Shape& src) {
  const std::size_t rank = out.size();
  Shape padded(rank, 1);
  std::copy(src.begin(), src.end(), padded.begin() + static_cast<std::ptrdiff_t>(rank - src.size()));
  std::vector<std::size_t> stride(rank, 0);
  std::size_t s = 1;
  for (std::size_t k = rank; k-- > 0;) {
    stride[k] = padded[k] == 1 ? 0 : s;
    s *= padded[k];
  }
  const std::size_t n = shape_numel(out);
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> coord(rank, 0);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < n; ++i) {
    index[i] = offset;
    for (std::size_t k = rank; k-- > 0;) {
      ++coord[k];
      offset += stride[k];
      if (coord[k] < out[k]) break;
      offset -= stride[k] * coord[k];
      coord[k] = 0;
    }
  }
  return index;
}

inline BroadcastPlan plan_broadcast(const Shape& a, const Shape& b, const char* op) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.identity = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t ea = k + a.size() >= rank ? a[k + a.size() - rank] : 1;
    const std::size_t eb = k + b.size() >= rank ? b[k + b.size() - rank] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) + " and " + shape_str(b) +
                           " are not broadcastable");
    }
    plan.out[k] = std::max(ea, eb);
  }
  plan.a_index = broadcast_index(plan.out, a);
  plan.b_index = broadcast_index(plan.out, b);
  return plan;
}

/// Generic binary elementwise op with broadcasting. `fwd(a, b)` computes the
/// value, `da(a, b, out)` and `db(a, b, out)` the local partials.
template <std::floating_point T, class Fwd, class Da, class Db>
BasicTensor<T> binary_op(const char* op, const BasicTensor<T>& a, const BasicTensor<T>& b, Fwd fwd,
                         Da da, Db db) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape(), op));
  const std::size_t n = shape_numel(plan->out);
  std::vector<T> out(n);
  const auto av = a.values();
  const auto bv = b.values();
  if (plan->identity) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[plan->a_index[i]], bv[plan->b_index[i]]);
  }
  auto ai = a.shared_impl();
  auto bi = b.shared_impl();
  Shape out_shape = plan->out;
  return make_result<T>(op, std::move(out_shape), std::move(out), {a, b},
                        [ai, bi, plan, da, db](std::span<const T> g) {
                          const auto& av = ai->values;
                          const auto& bv = bi->values;
                          auto* ga = ai->grad_buffer();
                          auto* gb = bi->grad_buffer();
                          for (std::size_t i = 0; i < g.size(); ++i) {
                            const std::size_t ia = plan->identity ? i : plan->a_index[i];
                            const std::size_t ib = plan->identity ? i : plan->b_index[i];
                            if (ga) (*ga)[ia] += g[i] * da(av[ia], bv[ib]);
                            if (gb) (*gb)[ib] += g[i] * db(av[ia], bv[ib]);
                          }
                        });
}

/// Unary elementwise op; `deriv(x, y)` gives dy/dx from input and output.
template <std::floating_point T, class Fwd, class Deriv>
BasicTensor<T> unary_op(const char* op, const BasicTensor<T>& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.values();
  std::vector<T> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  auto xi = x.shared_impl();
  auto saved = std::make_shared<std::vector<T>>(out);
  return make_result<T>(op, x.shape(), std::move(out), {x}, [xi, saved, deriv](std::span<const T> g) {
    auto* gx = xi->grad_buffer();
    if (!gx) return;
    const auto& xv = xi->values;
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * deriv(xv[i], (*saved)[i]);
  });
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Shape manipulation

template <std::floating_point T>
BasicTensor<T> reshape(const BasicTensor<T>& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("cannot reshape " + shape_str(x.shape()) + " to " + shape_str(shape));
  }
  auto xi = x.shared_impl();
  return detail::make_result<T>("reshape", std::move(shape), detail::copy_values(x), {x},
                                [xi](std::span<const T> g) { xi->accumulate_grad(g); });
}

template <std::floating_point T>
BasicTensor<T> transpose(const BasicTensor<T>& x) {
  detail::require_rank2(x.shape(), "transpose");
  const std::size_t r = x.rows(), c = x.cols();
  const auto xv = x.values();
  std::vector<T> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  auto xi = x.shared_impl();
  return detail::make_result<T>("transpose", {c, r}, std::move(out), {x}, [xi, r, c](std::span<const T> g) {
    auto* gx = xi->grad_buffer();
    if (!gx) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += g[j * r + i];
  });
}

/// Stacks two matrices with equal column counts.
template <std::floating_point T>
BasicTensor<T> concat_rows(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_rank2(a.shape(), "concat_rows");
  detail::require_rank2(b.shape(), "concat_rows");
  if (a.cols() != b.cols()) {
    throw DimensionError("concat_rows: column mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  std::vector<T> out(a.values().begin(), a.values().end());
  out.insert(out.end(), b.values().begin(), b.values().end());
  auto ai = a.shared_impl();
  auto bi = b.shared_impl();
  const std::size_t na = a.numel();
  return detail::make_result<T>("concat_rows", {a.rows() + b.rows(), a.cols()}, std::move(out), {a, b},
                                [ai, bi, na](std::span<const T> g) {
                                  ai->accumulate_grad(g.subspan(0, na));
                                  bi->accumulate_grad(g.subspan(na));
                                });
}

// ---------------------------------------------------------------------------
// Linear algebra

/// Matrix product of [B x M] and [M x N].
template <std::floating_point T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  detail::require_rank2(a.shape(), "matmul");
  detail::require_rank2(b.shape(), "matmul");
  const std::size_t n_rows = a.rows(), inner = a.cols(), n_cols = b.cols();
  if (b.rows() != inner) {
    throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<T> out(n_rows * n_cols, T(0));
  for (std::size_t i = 0; i < n_rows; ++i) {
    T* orow = out.data() + i * n_cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const T aik = av[i * inner + k];
      if (aik == T(0)) continue;
      const T* brow = bv.data() + k * n_cols;
      for (std::size_t j = 0; j < n_cols; ++j) orow[j] += aik * brow[j];
    }
  }
  auto ai = a.shared_impl();
  auto bi = b.shared_impl();
  return detail::make_result<T>(
      "matmul", {n_rows, n_cols}, std::move(out), {a, b}, [ai, bi, n_rows, inner, n_cols](std::span<const T> g) {
        const auto& av = ai->values;
        const auto& bv = bi->values;
        // dA = dC * B^T
        if (auto* ga = ai->grad_buffer()) {
          for (std::size_t i = 0; i < n_rows; ++i) {
            const T* grow = g.data() + i * n_cols;
            for (std::size_t k = 0; k < inner; ++k) {
              const T* brow = bv.data() + k * n_cols;
              T acc = T(0);
              for (std::size_t j = 0; j < n_cols; ++j) acc += grow[j] * brow[j];
              (*ga)[i * inner + k] += acc;
            }
          }
        }
        // dB = A^T * dC
        if (auto* gb = bi->grad_buffer()) {
          for (std::size_t i = 0; i < n_rows; ++i) {
            const T* grow = g.data() + i * n_cols;
            for (std::size_t k = 0; k < inner; ++k) {
              const T aik = av[i * inner + k];
              if (aik == T(0)) continue;
              T* gbrow = gb->data() + k * n_cols;
              for (std::size_t j = 0; j < n_cols; ++j) gbrow[j] += aik * grow[j];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Elementwise

template <std::floating_point T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary_op<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}

template <std::floating_point T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary_op<T>(
      "sub", a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}

template <std::floating_point T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return detail::binary_op<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}

template <std::floating_point T>
BasicTensor<T> div(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  for (T v : b.values()) {
    if (v == T(0)) throw NumericError("div: division by zero");
  }
  return detail::binary_op<T>(
      "div", a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
      [](T x, T y) { return -x / (y * y); });
}

template <std::floating_point T>
BasicTensor<T> scale(const BasicTensor<T>& x, T factor) {
  return detail::unary_op<T>(
      "scale", x, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <std::floating_point T>
BasicTensor<T> add_scalar(const BasicTensor<T>& x, T offset) {
  return detail::unary_op<T>(
      "add_scalar", x, [offset](T v) { return v + offset; }, [](T, T) { return T(1); });
}

template <std::floating_point T>
BasicTensor<T> neg(const BasicTensor<T>& x) {
  return scale(x, T(-1));
}

template <std::floating_point T>
BasicTensor<T> relu(const BasicTensor<T>& x) {
  return detail::unary_op<T>(
      "relu", x, [](T v) { return v > T(0) ? v : T(0); }, [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <std::floating_point T>
BasicTensor<T> exp(const BasicTensor<T>& x) {
  return detail::unary_op<T>(
      "exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <std::floating_point T>
BasicTensor<T> log(const BasicTensor<T>& x) {
  for (T v : x.values()) {
    if (!(v > T(0))) throw NumericError("log of non-positive value " + std::to_string(v));
  }
  return detail::unary_op<T>(
      "log", x, [](T v) { return std::log(v); }, [](T v, T) { return T(1) / v; });
}

template <std::floating_point T>
BasicTensor<T> sqrt(const BasicTensor<T>& x) {
  for (T v : x.values()) {
    if (v < T(0)) throw NumericError("sqrt of negative value " + std::to_string(v));
  }
  return detail::unary_op<T>(
      "sqrt", x, [](T v) { return std::sqrt(v); },
      [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

template <std::floating_point T>
BasicTensor<T> square(const BasicTensor<T>& x) {
  return detail::unary_op<T>(
      "square", x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

/// max(x, floor); the gradient passes only where x > floor.
template <std::floating_point T>
BasicTensor<T> clamp_min(const BasicTensor<T>& x, T floor) {
  return detail::unary_op<T>(
      "clamp_min", x, [floor](T v) { return v > floor ? v : floor; },
      [floor](T v, T) { return v > floor ? T(1) : T(0); });
}

enum class ElementwiseOp { add, sub, mul, div, relu, exp, log, sqrt, scale };

/// Dispatches to the named elementwise rule. Binary ops use `b`, `scale`
/// uses `factor`.
template <std::floating_point T>
BasicTensor<T> elementwise(ElementwiseOp op, const BasicTensor<T>& a, const BasicTensor<T>& b = {},
                           T factor = T(1)) {
  const auto need_b = [&] {
    if (!b.defined()) throw ContractError("binary elementwise op needs a second operand");
  };
  switch (op) {
    case ElementwiseOp::add: need_b(); return add(a, b);
    case ElementwiseOp::sub: need_b(); return sub(a, b);
    case ElementwiseOp::mul: need_b(); return mul(a, b);
    case ElementwiseOp::div: need_b(); return div(a, b);
    case ElementwiseOp::relu: return relu(a);
    case ElementwiseOp::exp: return exp(a);
    case ElementwiseOp::log: return log(a);
    case ElementwiseOp::sqrt: return sqrt(a);
    case ElementwiseOp::scale: return scale(a, factor);
  }
  throw ContractError("unknown elementwise op");
}

// ---------------------------------------------------------------------------
// Reductions

enum class ReduceOp { sum, mean, l2norm };

/// Reduces over `axes` (all axes when nullopt). Reduced axes are kept as
/// size-1 extents when `keepdim` is set; a full reduction without keepdim
/// yields shape [1].
template <std::floating_point T>
BasicTensor<T> reduce(ReduceOp op, const BasicTensor<T>& x, std::optional<std::vector<std::size_t>> axes = std::nullopt,
                      bool keepdim = true) {
  const Shape& in = x.shape();
  std::vector<bool> reduced(in.size(), axes ? false : true);
  if (axes) {
    if (axes->empty()) throw NumericError("empty reduction: no axes given");
    for (auto a : *axes) {
      if (a >= in.size()) throw DimensionError("reduce: axis " + std::to_string(a) + " out of range for " + shape_str(in));
      reduced[a] = true;
    }
  }
  Shape kept(in.size());
  Shape squeezed;
  for (std::size_t k = 0; k < in.size(); ++k) {
    kept[k] = reduced[k] ? 1 : in[k];
    if (!reduced[k]) squeezed.push_back(in[k]);
  }
  if (squeezed.empty()) squeezed = {1};
  const std::size_t out_n = shape_numel(kept);
  const std::size_t count = x.numel() / out_n;
  auto index = std::make_shared<std::vector<std::size_t>>();
  {
    // index maps each input element to its output slot.
    Shape probe = in;
    std::vector<std::size_t> out_stride(in.size(), 0);
    std::size_t s = 1;
    for (std::size_t k = in.size(); k-- > 0;) {
      out_stride[k] = reduced[k] ? 0 : s;
      s *= kept[k];
    }
    index->resize(x.numel());
    std::vector<std::size_t> coord(in.size(), 0);
    std::size_t offset = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) {
      (*index)[i] = offset;
      for (std::size_t k = in.size(); k-- > 0;) {
        ++coord[k];
        offset += out_stride[k];
        if (coord[k] < probe[k]) break;
        offset -= out_stride[k] * coord[k];
        coord[k] = 0;
      }
    }
  }
  const auto xv = x.values();
  std::vector<T> out(out_n, T(0));
  if (op == ReduceOp::l2norm) {
    for (std::size_t i = 0; i < xv.size(); ++i) out[(*index)[i]] += xv[i] * xv[i];
    for (auto& v : out) v = std::sqrt(v);
  } else {
    for (std::size_t i = 0; i < xv.size(); ++i) out[(*index)[i]] += xv[i];
    if (op == ReduceOp::mean) {
      for (auto& v : out) v /= static_cast<T>(count);
    }
  }
  auto xi = x.shared_impl();
  auto saved = std::make_shared<std::vector<T>>(out);
  const char* name = op == ReduceOp::sum ? "sum" : op == ReduceOp::mean ? "mean" : "l2norm";
  return detail::make_result<T>(name, keepdim ? kept : squeezed, std::move(out), {x},
                                [xi, index, saved, op, count](std::span<const T> g) {
                                  auto* gx = xi->grad_buffer();
                                  if (!gx) return;
                                  const auto& xv = xi->values;
                                  for (std::size_t i = 0; i < gx->size(); ++i) {
                                    const std::size_t o = (*index)[i];
                                    switch (op) {
                                      case ReduceOp::sum: (*gx)[i] += g[o]; break;
                                      case ReduceOp::mean: (*gx)[i] += g[o] / static_cast<T>(count); break;
                                      case ReduceOp::l2norm:
                                        // Subgradient 0 at the origin.
                                        if ((*saved)[o] > T(0)) (*gx)[i] += g[o] * xv[i] / (*saved)[o];
                                        break;
                                    }
                                  }
                                });
}

template <std::floating_point T>
BasicTensor<T> sum(const BasicTensor<T>& x) {
  return reduce(ReduceOp::sum, x, std::nullopt, false);
}

template <std::floating_point T>
BasicTensor<T> mean(const BasicTensor<T>& x) {
  return reduce(ReduceOp::mean, x, std::nullopt, false);
}

template <std::floating_point T>
BasicTensor<T> sum_axis(const BasicTensor<T>& x, std::size_t axis) {
  return reduce(ReduceOp::sum, x, std::vector<std::size_t>{axis}, true);
}

template <std::floating_point T>
BasicTensor<T> mean_axis(const BasicTensor<T>& x, std::size_t axis) {
  return reduce(ReduceOp::mean, x, std::vector<std::size_t>{axis}, true);
}

template <std::floating_point T>
BasicTensor<T> l2norm_axis(const BasicTensor<T>& x, std::size_t axis) {
  return reduce(ReduceOp::l2norm, x, std::vector<std::size_t>{axis}, true);
}

// ---------------------------------------------------------------------------
// Fused layers

/// Running statistics of a batch-normalization layer.
template <std::floating_point T>
struct BatchNormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  T momentum = T(0.1);
  T eps = T(1e-5);

  explicit BatchNormStats(std::size_t features = 0)
      : running_mean(features, T(0)), running_var(features, T(1)) {}
};

enum class Mode { train, eval };

namespace detail {

template <std::floating_point T>
BasicTensor<T> batchnorm_impl(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                              const BatchNormStats<T>& stats, Mode mode, BatchNormStats<T>* update) {
  detail::require_rank2(x.shape(), "batchnorm1d");
  const std::size_t n = x.rows(), f = x.cols();
  if (gamma.numel() != f || beta.numel() != f || stats.running_mean.size() != f) {
    throw DimensionError("batchnorm1d: parameter width does not match input " + shape_str(x.shape()));
  }
  if (mode == Mode::train && n < 2) {
    throw DegenerateBatchError("batchnorm1d in train mode needs at least 2 rows, got " + std::to_string(n));
  }
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  auto xhat = std::make_shared<std::vector<T>>(n * f);
  auto inv_std = std::make_shared<std::vector<T>>(f);
  std::vector<T> out(n * f);
  if (mode == Mode::train) {
    std::vector<T> mu(f, T(0)), var(f, T(0));
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) mu[j] += xv[i * f + j];
    for (auto& m : mu) m /= static_cast<T>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) {
        const T d = xv[i * f + j] - mu[j];
        var[j] += d * d;
      }
    for (auto& v : var) v /= static_cast<T>(n);
    for (std::size_t j = 0; j < f; ++j) {
      (*inv_std)[j] = T(1) / std::sqrt(var[j] + stats.eps);
      if (update) {
        update->running_mean[j] = (T(1) - stats.momentum) * stats.running_mean[j] + stats.momentum * mu[j];
        const T unbiased = var[j] * static_cast<T>(n) / static_cast<T>(n - 1);
        update->running_var[j] = (T(1) - stats.momentum) * stats.running_var[j] + stats.momentum * unbiased;
      }
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j) (*xhat)[i * f + j] = (xv[i * f + j] - mu[j]) * (*inv_std)[j];
  } else {
    for (std::size_t j = 0; j < f; ++j) (*inv_std)[j] = T(1) / std::sqrt(stats.running_var[j] + stats.eps);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < f; ++j)
        (*xhat)[i * f + j] = (xv[i * f + j] - stats.running_mean[j]) * (*inv_std)[j];
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < f; ++j) out[i * f + j] = gv[j] * (*xhat)[i * f + j] + bv[j];

  auto xi = x.shared_impl();
  auto gi = gamma.shared_impl();
  auto bi = beta.shared_impl();
  return detail::make_result<T>(
      "batchnorm1d", {n, f}, std::move(out), {x, gamma, beta},
      [xi, gi, bi, xhat, inv_std, n, f, mode](std::span<const T> g) {
        const auto& gv = gi->values;
        if (auto* gg = gi->grad_buffer()) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) (*gg)[j] += g[i * f + j] * (*xhat)[i * f + j];
        }
        if (auto* gb = bi->grad_buffer()) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) (*gb)[j] += g[i * f + j];
        }
        auto* gx = xi->grad_buffer();
        if (!gx) return;
        if (mode == Mode::eval) {
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < f; ++j) (*gx)[i * f + j] += g[i * f + j] * gv[j] * (*inv_std)[j];
          return;
        }
        std::vector<T> sum_d(f, T(0)), sum_dx(f, T(0));
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < f; ++j) {
            const T d = g[i * f + j] * gv[j];
            sum_d[j] += d;
            sum_dx[j] += d * (*xhat)[i * f + j];
          }
        const T inv_n = T(1) / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < f; ++j) {
            const T d = g[i * f + j] * gv[j];
            (*gx)[i * f + j] +=
                inv_n * (*inv_std)[j] * (static_cast<T>(n) * d - sum_d[j] - (*xhat)[i * f + j] * sum_dx[j]);
          }
      });
}

}  // namespace detail

/// Per-feature normalization of [B x F]. Train mode uses biased batch
/// statistics and updates the running estimates (unbiased variance, epsilon
/// 1e-5, momentum 0.1 by default); eval mode uses the running estimates.
template <std::floating_point T>
BasicTensor<T> batchnorm1d(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                           BatchNormStats<T>& stats, Mode mode) {
  return detail::batchnorm_impl(x, gamma, beta, stats, mode, mode == Mode::train ? &stats : static_cast<BatchNormStats<T>*>(nullptr));
}

/// Eval-mode normalization that never touches the statistics.
template <std::floating_point T>
BasicTensor<T> batchnorm1d_eval(const BasicTensor<T>& x, const BasicTensor<T>& gamma, const BasicTensor<T>& beta,
                                const BatchNormStats<T>& stats) {
  return detail::batchnorm_impl(x, gamma, beta, stats, Mode::eval, static_cast<BatchNormStats<T>*>(nullptr));
}

/// Mean softmax cross-entropy of [N x C] logits against class indices.
/// With `exclude_diagonal` (square logits only) entry (i, i) is removed from
/// row i's partition function, as needed for in-batch contrastive losses.
template <std::floating_point T>
BasicTensor<T> cross_entropy(const BasicTensor<T>& logits, std::span<const std::size_t> targets,
                             bool exclude_diagonal = false) {
  detail::require_rank2(logits.shape(), "cross_entropy");
  const std::size_t n = logits.rows(), c = logits.cols();
  if (targets.size() != n) throw DimensionError("cross_entropy: target count does not match rows");
  if (exclude_diagonal && n != c) throw DimensionError("cross_entropy: diagonal exclusion needs square logits");
  const auto lv = logits.values();
  auto probs = std::make_shared<std::vector<T>>(n * c, T(0));
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= c || (exclude_diagonal && targets[i] == i)) {
      throw ContractError("cross_entropy: invalid target " + std::to_string(targets[i]) + " in row " +
                          std::to_string(i));
    }
    T mx = -std::numeric_limits<T>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (exclude_diagonal && j == i) continue;
      mx = std::max(mx, lv[i * c + j]);
    }
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      if (exclude_diagonal && j == i) continue;
      const T e = std::exp(lv[i * c + j] - mx);
      (*probs)[i * c + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < c; ++j) (*probs)[i * c + j] /= z;
    total += -(lv[i * c + targets[i]] - mx - std::log(z));
  }
  total /= static_cast<T>(n);
  auto li = logits.shared_impl();
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return detail::make_result<T>("cross_entropy", {1}, {total}, {logits},
                                [li, probs, tgt = std::move(tgt), n, c](std::span<const T> g) {
                                  auto* gl = li->grad_buffer();
                                  if (!gl) return;
                                  const T s = g[0] / static_cast<T>(n);
                                  for (std::size_t i = 0; i < n; ++i) {
                                    for (std::size_t j = 0; j < c; ++j) (*gl)[i * c + j] += s * (*probs)[i * c + j];
                                    (*gl)[i * c + tgt[i]] -= s;
                                  }
                                });
}

}  // namespace pfr
