// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pfr/data/dataset.hpp"
#include "pfr/util/rng.hpp"

namespace pfr::data {

struct Task {
  std::vector<int> classes;          // sorted
  std::vector<std::size_t> train;    // indices into the train dataset
  std::vector<std::size_t> val;      // indices into the train dataset
  std::vector<std::size_t> test;     // indices into the test dataset
};

/// Ordered, class-disjoint partition of a dataset into tasks.
struct TaskStream {
  std::size_t n_classes = 0;
  std::vector<Task> tasks;

  std::size_t size() const noexcept { return tasks.size(); }

  /// Concatenated index lists of tasks [0, upto).
  std::vector<std::size_t> train_upto(std::size_t upto) const { return collect(upto, &Task::train); }
  std::vector<std::size_t> val_upto(std::size_t upto) const { return collect(upto, &Task::val); }
  std::vector<std::size_t> test_upto(std::size_t upto) const { return collect(upto, &Task::test); }
  std::vector<int> classes_upto(std::size_t upto) const {
    std::vector<int> out;
    for (std::size_t t = 0; t < upto && t < tasks.size(); ++t)
      out.insert(out.end(), tasks[t].classes.begin(), tasks[t].classes.end());
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  std::vector<std::size_t> collect(std::size_t upto, std::vector<std::size_t> Task::*field) const {
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < upto && t < tasks.size(); ++t) {
      const auto& src = tasks[t].*field;
      out.insert(out.end(), src.begin(), src.end());
    }
    return out;
  }
};

struct SplitOptions {
  std::size_t n_tasks = 4;
  std::uint64_t seed = 0;
  double val_fraction = 0.05;
  bool shuffle_classes = true;
};

/// Splits classes into `n_tasks` equal groups (after a seeded permutation
/// unless `shuffle_classes` is off) and carves a per-class stratified
/// validation split out of the training samples.
inline TaskStream split_tasks(const Dataset& train, const Dataset& test, const SplitOptions& opt) {
  if (opt.n_tasks == 0 || train.n_classes % opt.n_tasks != 0) {
    throw ConfigError("class count " + std::to_string(train.n_classes) + " is not divisible by n_tasks = " +
                      std::to_string(opt.n_tasks));
  }
  if (!(opt.val_fraction >= 0.0 && opt.val_fraction < 1.0)) throw ConfigError("val_fraction must lie in [0, 1)");
  if (test.n_classes != train.n_classes) throw ConfigError("train and test class counts differ");

  std::vector<int> order(train.n_classes);
  std::iota(order.begin(), order.end(), 0);
  if (opt.shuffle_classes) {
    Rng rng(derive_seed(opt.seed, 0x636c7373ULL));
    rng.shuffle(std::span<int>(order));
  }

  std::vector<std::vector<std::size_t>> by_class(train.n_classes), test_by_class(train.n_classes);
  for (std::size_t i = 0; i < train.size(); ++i) by_class[static_cast<std::size_t>(train[i].label)].push_back(i);
  for (std::size_t i = 0; i < test.size(); ++i) test_by_class[static_cast<std::size_t>(test[i].label)].push_back(i);

  TaskStream stream;
  stream.n_classes = train.n_classes;
  const std::size_t per_task = train.n_classes / opt.n_tasks;
  for (std::size_t t = 0; t < opt.n_tasks; ++t) {
    Task task;
    task.classes.assign(order.begin() + static_cast<std::ptrdiff_t>(t * per_task),
                        order.begin() + static_cast<std::ptrdiff_t>((t + 1) * per_task));
    std::sort(task.classes.begin(), task.classes.end());
    for (int c : task.classes) {
      auto idx = by_class[static_cast<std::size_t>(c)];
      Rng rng(derive_seed(opt.seed, 0x76616cULL, static_cast<std::uint64_t>(c)));
      rng.shuffle(std::span<std::size_t>(idx));
      const auto n_val = static_cast<std::size_t>(std::llround(opt.val_fraction * static_cast<double>(idx.size())));
      task.val.insert(task.val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
      task.train.insert(task.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val), idx.end());
      const auto& te = test_by_class[static_cast<std::size_t>(c)];
      task.test.insert(task.test.end(), te.begin(), te.end());
    }
    std::sort(task.train.begin(), task.train.end());
    std::sort(task.val.begin(), task.val.end());
    std::sort(task.test.begin(), task.test.end());
    stream.tasks.push_back(std::move(task));
  }
  return stream;
}

/// Seeded shuffle of `indices` cut into batches; a trailing batch with fewer
/// than two samples is dropped.
inline std::vector<std::vector<std::size_t>> minibatches(std::span<const std::size_t> indices, std::size_t batch_size,
                                                         std::uint64_t epoch_seed) {
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
  std::vector<std::size_t> order(indices.begin(), indices.end());
  Rng rng(epoch_seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t end = std::min(order.size(), start + batch_size);
    if (end - start < 2) break;
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace pfr::data
