// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pfr/errors.hpp"

namespace pfr::eval {

/// One metric observation. Sessions and tasks are 1-based; task 0 marks a
/// value over all tasks.
struct MetricRow {
  std::string run_id;
  std::string method;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::size_t session = 0;
  std::size_t task = 0;
  std::string metric;
  double value = 0.0;

  bool operator==(const MetricRow&) const = default;
};

inline constexpr const char* kCsvHeader = "run_id,method,lambda,seed,session,task,metric,value";

/// Shortest decimal text that parses back to the same double.
inline std::string format_value(double v) {
  if (std::isnan(v)) return "nan";
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::string to_csv(const std::vector<MetricRow>& rows) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += r.run_id + "," + r.method + "," + format_value(r.lambda) + "," + std::to_string(r.seed) + "," +
           std::to_string(r.session) + "," + std::to_string(r.task) + "," + r.metric + "," + format_value(r.value) +
           "\n";
  }
  return out;
}

namespace detail {

inline double parse_csv_double(const std::string& s, std::size_t line) {
  if (s == "nan") return std::nan("");
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
    throw FormatError("bad number '" + s + "' on CSV line " + std::to_string(line), 0);
  }
  return v;
}

}  // namespace detail

inline std::vector<MetricRow> parse_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw FormatError("metrics CSV header mismatch", 0);
  std::vector<MetricRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::size_t start = 0;
    for (std::size_t pos; (pos = line.find(',', start)) != std::string::npos; start = pos + 1)
      f.push_back(line.substr(start, pos - start));
    f.push_back(line.substr(start));
    if (f.size() != 8) throw FormatError("CSV line " + std::to_string(line_no) + " has " + std::to_string(f.size()) +
                                             " fields, expected 8",
                                         0);
    MetricRow r;
    r.run_id = f[0];
    r.method = f[1];
    r.lambda = detail::parse_csv_double(f[2], line_no);
    r.seed = std::stoull(f[3]);
    r.session = std::stoul(f[4]);
    r.task = std::stoul(f[5]);
    r.metric = f[6];
    r.value = detail::parse_csv_double(f[7], line_no);
    rows.push_back(std::move(r));
  }
  return rows;
}

inline void write_csv(const std::string& path, const std::vector<MetricRow>& rows) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << to_csv(rows);
}

inline std::vector<MetricRow> read_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str());
}

}  // namespace pfr::eval
