// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "pfr/cli/svg.hpp"
#include "pfr/errors.hpp"
#include "pfr/eval/csv.hpp"
#include "pfr/eval/metrics.hpp"

namespace pfr::cli {

enum class ReportKind { matrix, frontier, curves };

inline ReportKind parse_report_kind(const std::string& s) {
  if (s == "matrix") return ReportKind::matrix;
  if (s == "frontier") return ReportKind::frontier;
  if (s == "curves") return ReportKind::curves;
  throw ConfigError("unknown report kind '" + s + "' (accepted: matrix, frontier, curves)");
}

struct Report {
  std::string csv;
  std::string svg;
};

/// Rows of one run, indexed by (metric, session, task).
struct RunTable {
  std::string run_id;
  std::string method;
  double lambda = 0.0;
  std::uint64_t seed = 0;
  std::map<std::tuple<std::string, std::size_t, std::size_t>, double> values;

  std::size_t sessions() const {
    std::size_t s = 0;
    for (const auto& [k, v] : values)
      if (std::get<0>(k) == "acc_all") s = std::max(s, std::get<1>(k));
    return s;
  }
  const double* find(const std::string& metric, std::size_t session, std::size_t task) const {
    const auto it = values.find({metric, session, task});
    return it == values.end() ? nullptr : &it->second;
  }
  /// Per-task matrix metric present in this run.
  std::string cell_metric() const {
    for (const auto& [k, v] : values)
      if (std::get<0>(k) == "acc_aware") return "acc_aware";
    return "acc_agnostic";
  }
};

inline std::vector<RunTable> split_runs(const std::vector<eval::MetricRow>& rows) {
  std::vector<RunTable> runs;
  std::map<std::string, std::size_t> index;
  for (const auto& r : rows) {
    auto [it, inserted] = index.try_emplace(r.run_id, runs.size());
    if (inserted) runs.push_back({r.run_id, r.method, r.lambda, r.seed, {}});
    runs[it->second].values[{r.metric, r.session, r.task}] = r.value;
  }
  if (runs.empty()) throw ConfigError("metrics CSV has no rows");
  return runs;
}

using GroupKey = std::pair<std::string, double>;

inline std::string group_label(const GroupKey& g) {
  return g.first == "FT" || g.first == "CJ" ? g.first : g.first + " (" + eval::format_value(g.second) + ")";
}

inline void throw_missing(const std::vector<std::string>& missing, const std::string& what) {
  std::string msg = what + ": missing metric rows for";
  const std::size_t shown = std::min<std::size_t>(missing.size(), 20);
  for (std::size_t i = 0; i < shown; ++i) msg += (i ? "; " : " ") + missing[i];
  if (missing.size() > shown) msg += "; ... (" + std::to_string(missing.size()) + " in total)";
  throw ConfigError(msg);
}

/// Mean lower-triangular accuracy grid per (method, lambda) over runs.
inline Report matrix_report(const std::vector<eval::MetricRow>& rows) {
  const auto runs = split_runs(rows);
  std::map<GroupKey, std::vector<const RunTable*>> groups;
  for (const auto& r : runs) groups[{r.method, r.lambda}].push_back(&r);
  std::vector<std::string> missing;
  struct Grid {
    GroupKey key;
    std::size_t n = 0;
    std::vector<std::vector<double>> mean;
    std::size_t runs = 0;
  };
  std::vector<Grid> grids;
  for (const auto& [key, members] : groups) {
    std::size_t s = 0;
    for (const auto* r : members) s = std::max(s, r->sessions());
    if (s == 0) {
      missing.push_back(group_label(key) + " acc_all");
      continue;
    }
    Grid g{key, s, std::vector<std::vector<double>>(s, std::vector<double>(s, eval::kMissing)), members.size()};
    for (std::size_t k = 1; k <= s; ++k) {
      for (std::size_t j = 1; j <= k; ++j) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto* r : members) {
          const auto* v = r->find(r->cell_metric(), k, j);
          if (!v) {
            missing.push_back(r->run_id + " session " + std::to_string(k) + " task " + std::to_string(j));
          } else {
            sum += *v;
            ++n;
          }
        }
        if (n) g.mean[k - 1][j - 1] = sum / static_cast<double>(n);
      }
    }
    grids.push_back(std::move(g));
  }
  if (!missing.empty()) throw_missing(missing, "matrix report");

  Report rep;
  rep.csv = "method,lambda,session,task,mean,n\n";
  const double cell = 36.0, pad = 40.0;
  double width = pad, height = 0.0;
  for (const auto& g : grids) {
    width += g.n * cell + pad;
    height = std::max(height, g.n * cell + 2 * pad);
  }
  svg::Document doc(std::max(width, 200.0), height + 10);
  double x = pad;
  for (const auto& g : grids) {
    doc.text(x + g.n * cell / 2, 20, group_label(g.key), 12);
    for (std::size_t k = 0; k < g.n; ++k) {
      for (std::size_t j = 0; j <= k; ++j) {
        const double v = g.mean[k][j];
        rep.csv += g.key.first + "," + eval::format_value(g.key.second) + "," + std::to_string(k + 1) + "," +
                   std::to_string(j + 1) + "," + eval::format_value(v) + "," + std::to_string(g.runs) + "\n";
        doc.rect(x + j * cell, pad + k * cell, cell, cell, svg::heat(v));
        char buf[16];
        std::snprintf(buf, sizeof buf, "%.0f", 100.0 * v);
        doc.text(x + j * cell + cell / 2, pad + k * cell + cell / 2 + 4, buf, 10);
      }
    }
    x += g.n * cell + pad;
  }
  rep.svg = doc.str();
  return rep;
}

/// One frontier point per run: forgetting at the final session and
/// intransigence against the CJ run with the same seed.
struct FrontierPoint {
  std::string run_id;
  std::string method;
  double lambda = 0.0;
  double intransigence = 0.0;
  double forgetting = 0.0;
};

inline std::vector<FrontierPoint> frontier_points(const std::vector<eval::MetricRow>& rows) {
  const auto runs = split_runs(rows);
  std::map<std::uint64_t, const RunTable*> reference;
  for (const auto& r : runs)
    if (r.method == "CJ" && !reference.count(r.seed)) reference[r.seed] = &r;
  std::vector<std::string> missing;
  std::vector<FrontierPoint> out;
  for (const auto& r : runs) {
    if (r.method == "CJ") continue;
    const auto s = r.sessions();
    if (s < 2) {
      missing.push_back(r.run_id + " forgetting (needs at least two sessions)");
      continue;
    }
    const auto* f = r.find("forgetting", s, 0);
    const auto* diag = r.find(r.cell_metric(), s, s);
    const auto ref_it = reference.find(r.seed);
    const double* ref = ref_it == reference.end() ? nullptr : ref_it->second->find(ref_it->second->cell_metric(), s, s);
    if (!f) missing.push_back(r.run_id + " forgetting at session " + std::to_string(s));
    if (!diag) missing.push_back(r.run_id + " session " + std::to_string(s) + " task " + std::to_string(s));
    if (ref_it == reference.end()) {
      missing.push_back("CJ reference run for seed " + std::to_string(r.seed));
    } else if (!ref) {
      missing.push_back(ref_it->second->run_id + " session " + std::to_string(s) + " task " + std::to_string(s));
    }
    if (f && diag && ref) out.push_back({r.run_id, r.method, r.lambda, *ref - *diag, *f});
  }
  if (!missing.empty()) throw_missing(missing, "frontier report");
  return out;
}

inline Report frontier_report(const std::vector<eval::MetricRow>& rows) {
  const auto pts = frontier_points(rows);
  std::map<GroupKey, std::tuple<double, double, std::size_t>> groups;
  for (const auto& p : pts) {
    auto& [i, f, n] = groups[{p.method, p.lambda}];
    i += p.intransigence;
    f += p.forgetting;
    ++n;
  }
  Report rep;
  rep.csv = "method,lambda,intransigence,forgetting,n\n";
  double ilo = 1e300, ihi = -1e300, flo = 1e300, fhi = -1e300;
  std::vector<std::tuple<GroupKey, double, double>> means;
  for (const auto& [key, acc] : groups) {
    const auto& [i, f, n] = acc;
    const double mi = i / static_cast<double>(n), mf = f / static_cast<double>(n);
    rep.csv += key.first + "," + eval::format_value(key.second) + "," + eval::format_value(mi) + "," +
               eval::format_value(mf) + "," + std::to_string(n) + "\n";
    means.emplace_back(key, mi, mf);
    ilo = std::min(ilo, mi), ihi = std::max(ihi, mi), flo = std::min(flo, mf), fhi = std::max(fhi, mf);
  }
  svg::Document doc(480, 360);
  const double x0 = 70, y0 = 20, x1 = 460, y1 = 300;
  svg::axes(doc, x0, y0, x1, y1, ilo, ihi, flo, fhi, "intransigence", "forgetting");
  std::map<std::string, std::size_t> color;
  std::map<std::string, std::vector<std::pair<double, double>>> lines;
  for (const auto& [key, mi, mf] : means) {
    const auto c = color.try_emplace(key.first, color.size()).first->second;
    const double px = svg::scale(mi, ilo, ihi, x0 + 10, x1 - 10), py = svg::scale(mf, flo, fhi, y1 - 10, y0 + 10);
    doc.circle(px, py, 4, svg::palette(c));
    doc.text(px + 6, py - 6, group_label(key), 9, "start");
    lines[key.first].emplace_back(px, py);
  }
  for (const auto& [m, l] : lines)
    if (l.size() > 1) doc.polyline(l, svg::palette(color[m]));
  rep.svg = doc.str();
  return rep;
}

/// Mean all-class accuracy per session for each (method, lambda).
inline Report curves_report(const std::vector<eval::MetricRow>& rows) {
  const auto runs = split_runs(rows);
  std::map<GroupKey, std::vector<const RunTable*>> groups;
  for (const auto& r : runs) groups[{r.method, r.lambda}].push_back(&r);
  std::vector<std::string> missing;
  std::vector<std::pair<GroupKey, std::vector<double>>> curves;
  std::size_t max_s = 0;
  for (const auto& [key, members] : groups) {
    std::size_t s = 0;
    for (const auto* r : members) s = std::max(s, r->sessions());
    std::vector<double> c;
    for (std::size_t k = 1; k <= s; ++k) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const auto* r : members) {
        const auto* v = r->find("acc_all", k, 0);
        if (!v) {
          missing.push_back(r->run_id + " acc_all at session " + std::to_string(k));
        } else {
          sum += *v;
          ++n;
        }
      }
      c.push_back(n ? sum / static_cast<double>(n) : eval::kMissing);
    }
    max_s = std::max(max_s, s);
    curves.emplace_back(key, std::move(c));
  }
  if (!missing.empty()) throw_missing(missing, "curves report");
  Report rep;
  rep.csv = "method,lambda,session,mean,n\n";
  svg::Document doc(480, 360);
  const double x0 = 70, y0 = 20, x1 = 360, y1 = 300;
  svg::axes(doc, x0, y0, x1, y1, 1, static_cast<double>(max_s), 0, 1, "session", "accuracy");
  for (std::size_t g = 0; g < curves.size(); ++g) {
    const auto& [key, c] = curves[g];
    std::vector<std::pair<double, double>> pts;
    for (std::size_t k = 0; k < c.size(); ++k) {
      rep.csv += key.first + "," + eval::format_value(key.second) + "," + std::to_string(k + 1) + "," +
                 eval::format_value(c[k]) + "," + std::to_string(groups[key].size()) + "\n";
      pts.emplace_back(svg::scale(static_cast<double>(k + 1), 1, static_cast<double>(max_s), x0, x1),
                       svg::scale(c[k], 0, 1, y1, y0));
    }
    doc.polyline(pts, svg::palette(g));
    for (const auto& [px, py] : pts) doc.circle(px, py, 2.5, svg::palette(g));
    doc.text(x1 + 10, y0 + 14.0 * static_cast<double>(g + 1), group_label(key), 10, "start");
    doc.rect(x1 + 2, y0 + 14.0 * static_cast<double>(g + 1) - 7, 6, 6, svg::palette(g));
  }
  rep.svg = doc.str();
  return rep;
}

inline Report make_report(const std::vector<eval::MetricRow>& rows, ReportKind kind) {
  switch (kind) {
    case ReportKind::matrix: return matrix_report(rows);
    case ReportKind::frontier: return frontier_report(rows);
    case ReportKind::curves: return curves_report(rows);
  }
  throw ContractError("unknown report kind");
}

}  // namespace pfr::cli
