// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <vector>

#include "pfr/data/dataset.hpp"
#include "pfr/data/tasks.hpp"
#include "pfr/gradcore/optim.hpp"
#include "pfr/gradcore/schedule.hpp"
#include "pfr/nets/mlp.hpp"

namespace pfr::eval {

struct ProbeConfig {
  double lr = 5e-3;
  std::size_t patience = 5;
  double decay_factor = 0.3;
  std::size_t max_decays = 3;
  std::size_t max_epochs = 100;
  std::size_t batch_size = 64;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  /// Per-feature standardization with training statistics.
  bool standardize = true;
};

/// Row-major feature matrix with one label per row.
struct FeatureSet {
  std::size_t dim = 0;
  std::vector<double> values;
  std::vector<int> labels;

  std::size_t size() const noexcept { return labels.size(); }
};

/// Encoder features of `indices` in `ds`, computed in eval mode.
template <std::floating_point T>
FeatureSet extract_features(const nets::Mlp<T>& encoder, const data::Dataset& ds, std::span<const std::size_t> indices,
                            std::size_t chunk = 512) {
  FeatureSet out;
  out.dim = encoder.output_dim();
  out.values.reserve(indices.size() * out.dim);
  for (std::size_t start = 0; start < indices.size(); start += chunk) {
    const auto part = indices.subspan(start, std::min(chunk, indices.size() - start));
    const auto x = BasicTensor<T>::from_data({part.size(), ds.dim}, ds.gather<T>(part));
    const auto f = encoder.infer(x);
    for (T v : f.values()) out.values.push_back(static_cast<double>(v));
  }
  out.labels = ds.labels(indices);
  return out;
}

/// Raw inputs as features; the representation-free baseline.
inline FeatureSet raw_features(const data::Dataset& ds, std::span<const std::size_t> indices) {
  return {ds.dim, ds.gather<double>(indices), ds.labels(indices)};
}

/// Single linear layer over (standardized) features.
class LinearProbe {
 public:
  LinearProbe() = default;
  LinearProbe(std::vector<int> classes, std::vector<double> mean, std::vector<double> inv_std, Tensor weight,
              Tensor bias)
      : classes_(std::move(classes)),
        mean_(std::move(mean)),
        inv_std_(std::move(inv_std)),
        weight_(std::move(weight)),
        bias_(std::move(bias)) {}

  const std::vector<int>& classes() const noexcept { return classes_; }
  const Tensor& weight() const noexcept { return weight_; }
  const Tensor& bias() const noexcept { return bias_; }

  std::vector<int> predict(const FeatureSet& fs) const {
    const auto logits = this->logits(fs);
    const std::size_t c = classes_.size();
    std::vector<int> out(fs.size());
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const double* row = logits.values().data() + i * c;
      out[i] = classes_[static_cast<std::size_t>(std::max_element(row, row + c) - row)];
    }
    return out;
  }

  double accuracy(const FeatureSet& fs) const {
    if (fs.size() == 0) throw ContractError("accuracy of an empty feature set");
    const auto pred = predict(fs);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == fs.labels[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
  }

  /// Accuracy restricted to rows whose label is in `subset`.
  double accuracy_on(const FeatureSet& fs, std::span<const int> subset) const {
    const auto pred = predict(fs);
    std::size_t hit = 0, n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (std::find(subset.begin(), subset.end(), fs.labels[i]) == subset.end()) continue;
      ++n;
      hit += pred[i] == fs.labels[i];
    }
    if (n == 0) throw ContractError("no rows carry the requested labels");
    return static_cast<double>(hit) / static_cast<double>(n);
  }

  Tensor prepare(const FeatureSet& fs) const {
    if (fs.dim != mean_.size()) throw DimensionError("probe expects " + std::to_string(mean_.size()) + " features");
    std::vector<double> v(fs.values);
    for (std::size_t i = 0; i < fs.size(); ++i)
      for (std::size_t d = 0; d < fs.dim; ++d) {
        auto& x = v[i * fs.dim + d];
        x = (x - mean_[d]) * inv_std_[d];
      }
    return Tensor::from_data({fs.size(), fs.dim}, std::move(v));
  }

  Tensor logits(const FeatureSet& fs) const { return add(matmul(prepare(fs), weight_), bias_); }

 private:
  std::vector<int> classes_;
  std::vector<double> mean_;
  std::vector<double> inv_std_;
  Tensor weight_;
  Tensor bias_;
};

/// Trains a cross-entropy linear classifier with Adam and the patience
/// schedule on validation accuracy; returns the best-validation weights.
/// An empty `val` falls back to training accuracy for model selection.
inline LinearProbe train_linear_probe(const FeatureSet& train, const FeatureSet& val, const ProbeConfig& cfg) {
  if (train.size() == 0) throw ConfigError("probe training set is empty");
  std::vector<int> classes(train.labels);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  if (classes.size() < 2) throw ConfigError("probe training set needs at least two classes");
  std::map<int, std::size_t> slot;
  for (std::size_t i = 0; i < classes.size(); ++i) slot[classes[i]] = i;
  for (int y : val.labels) {
    if (!slot.contains(y)) throw ConfigError("validation label " + std::to_string(y) + " has no training samples");
  }

  const std::size_t d = train.dim, c = classes.size();
  std::vector<double> mean(d, 0.0), inv_std(d, 1.0);
  if (cfg.standardize) {
    for (std::size_t i = 0; i < train.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) mean[k] += train.values[i * d + k];
    for (auto& m : mean) m /= static_cast<double>(train.size());
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < train.size(); ++i)
      for (std::size_t k = 0; k < d; ++k) {
        const double z = train.values[i * d + k] - mean[k];
        var[k] += z * z;
      }
    for (std::size_t k = 0; k < d; ++k) {
      const double sd = std::sqrt(var[k] / static_cast<double>(train.size()));
      inv_std[k] = sd > 1e-8 ? 1.0 / sd : 1.0;
    }
  }

  LinearProbe probe(classes, mean, inv_std, Tensor::zeros({d, c}, true), Tensor::zeros({1, c}, true));
  const Tensor x_all = probe.prepare(train);
  std::vector<std::size_t> targets(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) targets[i] = slot[train.labels[i]];

  Adam<double> opt(0.9, 0.999, 1e-8, cfg.weight_decay);
  auto sched = LRSchedule::patience(cfg.lr, cfg.decay_factor, cfg.patience, cfg.max_decays);
  std::vector<Tensor> params{probe.weight(), probe.bias()};
  std::vector<double> best_w(probe.weight().values().begin(), probe.weight().values().end());
  std::vector<double> best_b(c, 0.0);
  double best = -1.0;
  const FeatureSet& selector = val.size() ? val : train;
  const std::size_t bs = std::max<std::size_t>(2, std::min(cfg.batch_size, train.size()));

  std::vector<std::size_t> all(train.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, 0x70726f62ULL, epoch));
    std::vector<std::size_t> order(all);
    rng.shuffle(std::span<std::size_t>(order));
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      std::vector<double> xb;
      std::vector<std::size_t> yb;
      xb.reserve((end - start) * d);
      for (std::size_t i = start; i < end; ++i) {
        const auto row = x_all.values().subspan(order[i] * d, d);
        xb.insert(xb.end(), row.begin(), row.end());
        yb.push_back(targets[order[i]]);
      }
      const auto xt = Tensor::from_data({end - start, d}, std::move(xb));
      backward(cross_entropy(add(matmul(xt, probe.weight()), probe.bias()), yb));
      opt.step(params, sched.rate(epoch));
    }
    const double acc = probe.accuracy(selector);
    if (acc > best) {
      best = acc;
      best_w.assign(probe.weight().values().begin(), probe.weight().values().end());
      best_b.assign(probe.bias().values().begin(), probe.bias().values().end());
    }
    if (sched.observe(acc) == LRSchedule::Event::exhausted) break;
  }
  return LinearProbe(classes, mean, inv_std, Tensor::from_data({d, c}, best_w), Tensor::from_data({1, c}, best_b));
}

/// Probe on encoder features of `train_idx`, selected on `val_idx`, scored on
/// `test_idx`.
template <std::floating_point T>
double probe_accuracy(const nets::Mlp<T>& encoder, const data::Dataset& train, std::span<const std::size_t> train_idx,
                      std::span<const std::size_t> val_idx, const data::Dataset& test,
                      std::span<const std::size_t> test_idx, const ProbeConfig& cfg) {
  const auto probe =
      train_linear_probe(extract_features(encoder, train, train_idx), extract_features(encoder, train, val_idx), cfg);
  return probe.accuracy(extract_features(encoder, test, test_idx));
}

}  // namespace pfr::eval
