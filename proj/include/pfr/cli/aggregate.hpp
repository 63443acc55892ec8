// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "pfr/eval/csv.hpp"
#include "pfr/eval/metrics.hpp"

namespace pfr::cli {

inline constexpr const char* kAggregateHeader = "method,lambda,session,task,metric,mean,std,n";

/// Mean and sample standard deviation of one (method, lambda, session,
/// task, metric) cell across runs. Non-finite values are skipped.
struct AggregateRow {
  std::string method;
  double lambda = 0.0;
  std::size_t session = 0;
  std::size_t task = 0;
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

inline std::vector<AggregateRow> aggregate(const std::vector<eval::MetricRow>& rows) {
  using Key = std::tuple<std::string, double, std::size_t, std::size_t, std::string>;
  std::map<Key, std::vector<double>> cells;
  std::vector<Key> order;
  for (const auto& r : rows) {
    const Key k{r.method, r.lambda, r.session, r.task, r.metric};
    auto [it, inserted] = cells.try_emplace(k);
    if (inserted) order.push_back(k);
    if (std::isfinite(r.value)) it->second.push_back(r.value);
  }
  std::vector<AggregateRow> out;
  for (const auto& k : order) {
    const auto& v = cells[k];
    AggregateRow a{std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), std::get<4>(k), eval::kMissing,
                   eval::kMissing, v.size()};
    if (!v.empty()) {
      double s = 0.0;
      for (double x : v) s += x;
      a.mean = s / static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - a.mean) * (x - a.mean);
      a.std = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  std::string out = std::string(kAggregateHeader) + "\n";
  for (const auto& r : rows) {
    out += r.method + "," + eval::format_value(r.lambda) + "," + std::to_string(r.session) + "," +
           std::to_string(r.task) + "," + r.metric + "," + eval::format_value(r.mean) + "," +
           eval::format_value(r.std) + "," + std::to_string(r.n) + "\n";
  }
  return out;
}

}  // namespace pfr::cli
