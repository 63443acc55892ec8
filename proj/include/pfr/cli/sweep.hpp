// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <string>
#include <string_view>
#include <vector>

#include "pfr/train/experiment.hpp"

namespace pfr::cli {

/// One swept config key and its values.
struct Axis {
  std::string key;
  std::vector<std::string> values;
};

/// Base config plus axes. `seeds` is a separate axis that sets the data,
/// init and augmentation seeds together.
struct SweepSpec {
  train::ExperimentConfig base;
  std::vector<Axis> axes;
  std::vector<std::uint64_t> seeds;
  std::size_t cap = 256;

  std::size_t expansion_size() const {
    std::size_t n = seeds.empty() ? 1 : seeds.size();
    for (const auto& a : axes) n *= a.values.size();
    return n;
  }
};

struct SweepRun {
  /// Directory name and CSV run id; unique within the sweep.
  std::string id;
  train::ExperimentConfig cfg;
};

/// Splits an axis value list on ';' when present, else on ','.
inline std::vector<std::string> split_values(std::string_view text) {
  const char sep = text.find(';') != std::string_view::npos ? ';' : ',';
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto next = text.find(sep, pos);
    const auto part = train::detail::trim(text.substr(pos, next == std::string_view::npos ? text.npos : next - pos));
    if (!part.empty()) out.emplace_back(part);
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

inline std::vector<std::uint64_t> parse_seeds(std::string_view text) {
  std::vector<std::uint64_t> out;
  for (const auto& v : split_values(text)) {
    std::uint64_t s = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), s);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) throw ConfigError("invalid seed '" + v + "'");
    out.push_back(s);
  }
  if (out.empty()) throw ConfigError("empty seed list");
  return out;
}

/// Parses a sweep file: ordinary config lines set the base, `sweep.<key>`
/// lines declare axes, `sweep.seeds` the seed axis and `sweep.cap` the
/// expansion limit.
inline SweepSpec parse_sweep(std::string_view text, train::ExperimentConfig base = {}) {
  SweepSpec spec;
  std::string base_text;
  std::size_t pos = 0, line_no = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto line = train::detail::trim(text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos));
    ++line_no;
    if (line.rfind("sweep.", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
      const auto key = std::string(train::detail::trim(line.substr(6, eq - 6)));
      const auto value = train::detail::trim(line.substr(eq + 1));
      if (key == "seeds") {
        spec.seeds = parse_seeds(value);
      } else if (key == "cap") {
        spec.cap = static_cast<std::size_t>(std::stoull(std::string(value)));
      } else {
        auto probe = base;
        auto values = split_values(value);
        if (values.empty()) throw ConfigError("sweep axis " + key + " has no values");
        for (const auto& v : values) train::set_field(probe, key, v);
        spec.axes.push_back({key, std::move(values)});
      }
    } else {
      base_text += std::string(line) + "\n";
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  spec.base = train::parse_config(base_text, base);
  return spec;
}

/// Cartesian expansion; the first axis varies slowest and seeds fastest.
inline std::vector<SweepRun> expand(const SweepSpec& spec) {
  const auto n = spec.expansion_size();
  if (n > spec.cap) {
    throw ConfigError("sweep expands to " + std::to_string(n) + " runs, above the cap of " + std::to_string(spec.cap) +
                      " (raise sweep.cap to allow it)");
  }
  std::vector<SweepRun> out;
  out.reserve(n);
  std::vector<std::size_t> digit(spec.axes.size(), 0);
  const std::size_t n_seeds = spec.seeds.empty() ? 1 : spec.seeds.size();
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t rest = i / n_seeds;
    for (std::size_t a = spec.axes.size(); a-- > 0;) {
      digit[a] = rest % spec.axes[a].values.size();
      rest /= spec.axes[a].values.size();
    }
    auto cfg = spec.base;
    for (std::size_t a = 0; a < spec.axes.size(); ++a) train::set_field(cfg, spec.axes[a].key, spec.axes[a].values[digit[a]]);
    if (!spec.seeds.empty()) cfg.set_seed(spec.seeds[i % n_seeds]);
    cfg.validate();
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "%03zu-", i);
    out.push_back({prefix + train::default_run_id(cfg), std::move(cfg)});
  }
  return out;
}

}  // namespace pfr::cli
