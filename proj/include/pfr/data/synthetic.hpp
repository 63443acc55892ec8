// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "pfr/data/dataset.hpp"
#include "pfr/util/rng.hpp"

namespace pfr::data {

/// Class-conditional Gaussian clusters.
///
/// Each class owns `modes_per_class` unit-norm mean directions drawn from
/// `seed`; samples cycle through the modes and add isotropic noise of scale
/// `sigma`. `domain_shift` moves every mean towards an independent random
/// direction (then renormalizes) to build related but shifted domains.
/// `stream` selects an independent sample draw over the same means, so
/// train and test partitions share their cluster geometry. With `antipodal`
/// every odd mode is the negation of the mode before it, so class means
/// vanish and the classes are not linearly separable in input space.
struct SyntheticSpec {
  std::size_t n_classes = 8;
  std::size_t dim = 16;
  std::size_t per_class = 100;
  std::uint64_t seed = 0;
  double sigma = 0.1;
  std::size_t modes_per_class = 1;
  double domain_shift = 0.0;
  std::uint64_t stream = 0;
  bool antipodal = false;
};

namespace detail {

inline std::vector<double> random_unit(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n2 = 0.0;
  do {
    n2 = 0.0;
    for (auto& x : v) {
      x = rng.normal();
      n2 += x * x;
    }
  } while (n2 == 0.0);
  const double inv = 1.0 / std::sqrt(n2);
  for (auto& x : v) x *= inv;
  return v;
}

}  // namespace detail

/// Unit-norm mean of (class, mode) for a spec; shared by every stream.
inline std::vector<double> synthetic_mean(const SyntheticSpec& spec, std::size_t cls, std::size_t mode) {
  if (spec.antipodal && mode % 2 == 1) {
    auto mu = synthetic_mean(spec, cls, mode - 1);
    for (auto& x : mu) x = -x;
    return mu;
  }
  Rng rng(derive_seed(spec.seed, 0x6d65616eULL, cls, mode));
  auto mu = detail::random_unit(rng, spec.dim);
  if (spec.domain_shift != 0.0) {
    Rng shift_rng(derive_seed(spec.seed, 0x73686674ULL, cls, mode));
    const auto delta = detail::random_unit(shift_rng, spec.dim);
    double n2 = 0.0;
    for (std::size_t i = 0; i < spec.dim; ++i) {
      mu[i] += spec.domain_shift * delta[i];
      n2 += mu[i] * mu[i];
    }
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& x : mu) x *= inv;
  }
  return mu;
}

inline Dataset gen_synthetic(const SyntheticSpec& spec) {
  if (spec.n_classes < 2) throw ConfigError("synthetic data needs at least 2 classes");
  if (spec.dim < 2) throw ConfigError("synthetic data needs dimension at least 2");
  if (spec.modes_per_class == 0) throw ConfigError("modes_per_class must be positive");
  if (spec.sigma < 0.0) throw ConfigError("sigma must be non-negative");
  Dataset ds;
  ds.dim = spec.dim;
  ds.n_classes = spec.n_classes;
  ds.samples.reserve(spec.n_classes * spec.per_class);
  for (std::size_t c = 0; c < spec.n_classes; ++c) {
    std::vector<std::vector<double>> means;
    for (std::size_t k = 0; k < spec.modes_per_class; ++k) means.push_back(synthetic_mean(spec, c, k));
    Rng rng(derive_seed(spec.seed, 0x73616d70ULL, spec.stream, c));
    for (std::size_t i = 0; i < spec.per_class; ++i) {
      Sample s;
      s.label = static_cast<int>(c);
      s.source_index = ds.samples.size();
      const auto& mu = means[i % spec.modes_per_class];
      s.input.resize(spec.dim);
      for (std::size_t d = 0; d < spec.dim; ++d) s.input[d] = mu[d] + spec.sigma * rng.normal();
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

/// Train and test draws over the same class geometry.
inline LabeledData gen_synthetic_split(SyntheticSpec spec, std::size_t test_per_class) {
  LabeledData out;
  spec.stream = 0;
  out.train = gen_synthetic(spec);
  spec.stream = 1;
  spec.per_class = test_per_class;
  out.test = gen_synthetic(spec);
  return out;
}

}  // namespace pfr::data
