// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pfr/errors.hpp"

namespace pfr::eval {

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

/// cells[k][j]: accuracy on task j's test classes after session k (both
/// 0-based); NaN marks a cell that was not evaluated. agnostic[k] is the
/// all-class accuracy after session k.
struct AccuracyMatrix {
  std::vector<std::vector<double>> cells;
  std::vector<double> agnostic;

  static AccuracyMatrix empty(std::size_t sessions, std::size_t tasks) {
    return {std::vector<std::vector<double>>(sessions, std::vector<double>(tasks, kMissing)),
            std::vector<double>(sessions, kMissing)};
  }

  std::size_t sessions() const noexcept { return cells.size(); }
  std::size_t tasks() const noexcept { return cells.empty() ? 0 : cells.front().size(); }

  double at(std::size_t k, std::size_t j) const {
    if (k >= sessions() || j >= tasks()) throw ContractError("accuracy matrix index out of range");
    const double v = cells[k][j];
    if (std::isnan(v)) {
      throw ContractError("accuracy matrix cell (session " + std::to_string(k + 1) + ", task " + std::to_string(j + 1) +
                          ") was not evaluated");
    }
    return v;
  }
};

enum class ForgettingRule { max_previous, first_minus_last };

/// Mean over tasks j < k of the drop from the best earlier accuracy on j
/// (evaluated sessions l < k) to A[k][j]. Requires k >= 1.
inline double forgetting(const AccuracyMatrix& a, std::size_t k, ForgettingRule rule = ForgettingRule::max_previous) {
  if (k < 1) throw ContractError("forgetting needs at least one earlier session");
  if (k >= a.sessions()) throw ContractError("forgetting: session out of range");
  double total = 0.0;
  for (std::size_t j = 0; j < k; ++j) {
    double ref;
    if (rule == ForgettingRule::first_minus_last) {
      ref = a.at(j, j);
    } else {
      ref = a.at(j, j);
      for (std::size_t l = 0; l < k; ++l) {
        if (!std::isnan(a.cells[l][j])) ref = std::max(ref, a.cells[l][j]);
      }
    }
    total += ref - a.at(k, j);
  }
  return total / static_cast<double>(k);
}

/// a*_k - A[k][k], where a*_k comes from the continual-joint reference run.
inline double intransigence(const AccuracyMatrix& a, std::size_t k, std::optional<double> referential) {
  if (!referential) {
    throw ContractError("intransigence needs a referential accuracy; run the same stream with method=CJ first");
  }
  return *referential - a.at(k, k);
}

struct CLMetrics {
  std::vector<double> forgetting;     // NaN at session 0
  std::vector<double> intransigence;  // NaN without a reference
  std::vector<double> referential;
};

/// Per-session forgetting and intransigence from a task-aware matrix and the
/// reference run's diagonal.
inline CLMetrics cl_metrics(const AccuracyMatrix& a, const AccuracyMatrix* reference = nullptr,
                            ForgettingRule rule = ForgettingRule::max_previous) {
  CLMetrics m;
  for (std::size_t k = 0; k < a.sessions(); ++k) {
    m.forgetting.push_back(k == 0 ? kMissing : forgetting(a, k, rule));
    if (reference) {
      const double ref = reference->at(k, k);
      m.referential.push_back(ref);
      m.intransigence.push_back(intransigence(a, k, ref));
    } else {
      m.referential.push_back(kMissing);
      m.intransigence.push_back(kMissing);
    }
  }
  return m;
}

/// Linear CKA between row-aligned representations X [n x p] and Y [n x q]
/// (row-major): ||Y^T X||_F^2 / (||X^T X||_F ||Y^T Y||_F) after column
/// centering.
inline double cka_linear(std::span<const double> x, std::size_t p, std::span<const double> y, std::size_t q) {
  if (p == 0 || q == 0 || x.size() % p != 0 || y.size() % q != 0) throw DimensionError("cka_linear: bad extents");
  const std::size_t n = x.size() / p;
  if (y.size() / q != n) throw DimensionError("cka_linear: row counts differ");
  if (n < 2) throw DimensionError("cka_linear needs at least two rows");
  const auto center = [n](std::span<const double> m, std::size_t cols) {
    std::vector<double> out(m.begin(), m.end());
    for (std::size_t c = 0; c < cols; ++c) {
      double mu = 0.0;
      for (std::size_t r = 0; r < n; ++r) mu += out[r * cols + c];
      mu /= static_cast<double>(n);
      for (std::size_t r = 0; r < n; ++r) out[r * cols + c] -= mu;
    }
    return out;
  };
  const auto xc = center(x, p), yc = center(y, q);
  const auto cross_sq = [n](const std::vector<double>& a, std::size_t pa, const std::vector<double>& b,
                            std::size_t pb) {
    double s = 0.0;
    for (std::size_t i = 0; i < pa; ++i)
      for (std::size_t j = 0; j < pb; ++j) {
        double dot = 0.0;
        for (std::size_t r = 0; r < n; ++r) dot += a[r * pa + i] * b[r * pb + j];
        s += dot * dot;
      }
    return s;
  };
  const double xx = std::sqrt(cross_sq(xc, p, xc, p));
  const double yy = std::sqrt(cross_sq(yc, q, yc, q));
  if (xx == 0.0 || yy == 0.0) throw NumericError("cka_linear: a representation has zero variance");
  return cross_sq(yc, q, xc, p) / (xx * yy);
}

/// Spearman rank correlation with average ranks for ties.
inline double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DimensionError("spearman needs two equal-length series");
  const auto ranks = [](std::span<const double> v) {
    std::vector<std::size_t> idx(v.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](std::size_t l, std::size_t r) { return v[l] < v[r]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < idx.size();) {
      std::size_t j = i;
      while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace pfr::eval
