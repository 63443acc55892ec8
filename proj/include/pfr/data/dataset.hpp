// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "pfr/errors.hpp"

namespace pfr::data {

struct Sample {
  std::vector<double> input;
  int label = 0;
  std::size_t source_index = 0;

  bool operator==(const Sample&) const = default;
};

/// Labeled samples with a fixed input dimensionality.
struct Dataset {
  std::size_t dim = 0;
  std::size_t n_classes = 0;
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  const Sample& operator[](std::size_t i) const { return samples[i]; }

  void validate() const {
    for (const auto& s : samples) {
      if (s.input.size() != dim) {
        throw ConfigError("sample " + std::to_string(s.source_index) + " has dimension " +
                          std::to_string(s.input.size()) + ", dataset declares " + std::to_string(dim));
      }
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= n_classes) {
        throw ConfigError("sample " + std::to_string(s.source_index) + " label " + std::to_string(s.label) +
                          " outside [0, " + std::to_string(n_classes) + ")");
      }
    }
  }

  /// Row-major [n x dim] copy of the selected inputs.
  template <class T = double>
  std::vector<T> gather(std::span<const std::size_t> indices) const {
    std::vector<T> out;
    out.reserve(indices.size() * dim);
    for (auto i : indices) {
      for (double v : samples.at(i).input) out.push_back(static_cast<T>(v));
    }
    return out;
  }

  std::vector<int> labels(std::span<const std::size_t> indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(samples.at(i).label);
    return out;
  }

  std::vector<std::size_t> all_indices() const {
    std::vector<std::size_t> idx(samples.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return idx;
  }
};

/// Train and test partitions drawn from the same label space.
struct LabeledData {
  Dataset train;
  Dataset test;
};

}  // namespace pfr::data
