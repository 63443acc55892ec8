// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "pfr/data/dataset.hpp"
#include "pfr/data/tasks.hpp"
#include "pfr/eval/metrics.hpp"
#include "pfr/eval/probe.hpp"
#include "pfr/nets/mlp.hpp"

namespace pfr::eval {

enum class MatrixKind { aware, agnostic };

struct MatrixOptions {
  MatrixKind kind = MatrixKind::aware;
  /// Aware mode only: also probe tasks the session has not trained on yet.
  bool future_data = false;
  ProbeConfig probe{};
};

/// Probe accuracies of one encoder per session. `agnostic` always holds the
/// all-class probe accuracy on the full test set. In agnostic mode cell
/// (k, j) is that probe's accuracy restricted to task j's test samples; in
/// aware mode it comes from a probe trained on task j's classes only.
template <std::floating_point T>
AccuracyMatrix eval_matrix(std::span<const nets::Mlp<T>* const> encoders, const data::Dataset& train,
                           const data::Dataset& test, const data::TaskStream& stream, const MatrixOptions& opt) {
  if (encoders.empty()) throw ContractError("eval_matrix needs one encoder per session");
  for (std::size_t k = 0; k < encoders.size(); ++k) {
    if (!encoders[k]) throw ContractError("missing checkpoint for session " + std::to_string(k + 1));
  }
  const std::size_t n_tasks = stream.size();
  auto a = AccuracyMatrix::empty(encoders.size(), n_tasks);
  const auto all_train = stream.train_upto(n_tasks);
  const auto all_val = stream.val_upto(n_tasks);
  const auto all_test = stream.test_upto(n_tasks);
  for (std::size_t k = 0; k < encoders.size(); ++k) {
    const auto& enc = *encoders[k];
    const auto test_fs = extract_features(enc, test, all_test);
    const auto probe =
        train_linear_probe(extract_features(enc, train, all_train), extract_features(enc, train, all_val), opt.probe);
    a.agnostic[k] = probe.accuracy(test_fs);
    for (std::size_t j = 0; j < n_tasks; ++j) {
      const auto& task = stream.tasks[j];
      if (opt.kind == MatrixKind::agnostic) {
        a.cells[k][j] = probe.accuracy_on(test_fs, task.classes);
        continue;
      }
      if (j > k && !opt.future_data) continue;
      if (task.classes.size() < 2) {
        throw ConfigError("task-aware probes need at least two classes per task; use agnostic matrices");
      }
      a.cells[k][j] = probe_accuracy(enc, train, task.train, task.val, test, task.test, opt.probe);
    }
  }
  return a;
}

/// Row-aligned features of at most `cap` samples.
template <std::floating_point T>
FeatureSet capped_features(const nets::Mlp<T>& enc, const data::Dataset& ds, std::span<const std::size_t> idx,
                           std::size_t cap) {
  return extract_features(enc, ds, idx.first(std::min(cap, idx.size())));
}

/// CKA between the features of `reference` and `other` on the same samples.
template <std::floating_point T>
double cka_between(const nets::Mlp<T>& reference, const nets::Mlp<T>& other, const data::Dataset& ds,
                   std::span<const std::size_t> idx, std::size_t cap) {
  const auto x = capped_features(reference, ds, idx, cap);
  const auto y = capped_features(other, ds, idx, cap);
  return cka_linear(x.values, x.dim, y.values, y.dim);
}

enum class Resample { none, linear };

/// Linearly interpolates a vector to `dim` entries.
inline std::vector<double> resample_linear(std::span<const double> x, std::size_t dim) {
  if (x.empty() || dim == 0) throw DimensionError("cannot resample an empty vector");
  std::vector<double> out(dim);
  if (x.size() == 1 || dim == 1) {
    std::fill(out.begin(), out.end(), x[0]);
    return out;
  }
  const double step = static_cast<double>(x.size() - 1) / static_cast<double>(dim - 1);
  for (std::size_t i = 0; i < dim; ++i) {
    const double pos = step * static_cast<double>(i);
    const auto lo = std::min(static_cast<std::size_t>(pos), x.size() - 2);
    const double f = pos - static_cast<double>(lo);
    out[i] = x[lo] * (1.0 - f) + x[lo + 1] * f;
  }
  return out;
}

inline data::Dataset resample_dataset(const data::Dataset& ds, std::size_t dim) {
  data::Dataset out = ds;
  out.dim = dim;
  for (auto& s : out.samples) s.input = resample_linear(s.input, dim);
  return out;
}

/// All-class probe of a frozen encoder on a foreign labeled dataset.
template <std::floating_point T>
double downstream_eval(const nets::Mlp<T>& encoder, const data::LabeledData& foreign, const ProbeConfig& probe,
                       Resample resample = Resample::none, double val_fraction = 0.05) {
  const data::LabeledData* src = &foreign;
  data::LabeledData converted;
  if (foreign.train.dim != encoder.input_dim() || foreign.test.dim != encoder.input_dim()) {
    if (resample == Resample::none) {
      throw ConfigError("downstream data has dimension " + std::to_string(foreign.train.dim) +
                        " but the encoder expects " + std::to_string(encoder.input_dim()) +
                        "; enable resampling to convert it");
    }
    converted = {resample_dataset(foreign.train, encoder.input_dim()), resample_dataset(foreign.test, encoder.input_dim())};
    src = &converted;
  }
  data::SplitOptions split;
  split.n_tasks = 1;
  split.val_fraction = val_fraction;
  split.shuffle_classes = false;
  split.seed = probe.seed;
  const auto stream = data::split_tasks(src->train, src->test, split);
  const auto& t = stream.tasks.front();
  return probe_accuracy(encoder, src->train, t.train, t.val, src->test, t.test, probe);
}

}  // namespace pfr::eval
