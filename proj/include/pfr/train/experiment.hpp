// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include "pfr/data/cifar.hpp"
#include "pfr/data/synthetic.hpp"
#include "pfr/data/tasks.hpp"
#include "pfr/data/tensor_file.hpp"
#include "pfr/eval/csv.hpp"
#include "pfr/eval/matrix.hpp"
#include "pfr/train/run.hpp"

namespace pfr::train {

inline constexpr const char* kDataRootEnv = "PFR_DATA_ROOT";

inline fs::path data_root() {
  const char* env = std::getenv(kDataRootEnv);
  return env && *env ? fs::path(env) : fs::current_path();
}

inline data::SyntheticSpec synthetic_spec(const ExperimentConfig& cfg) {
  data::SyntheticSpec s;
  s.n_classes = cfg.data.n_classes;
  s.dim = cfg.data.dim;
  s.per_class = cfg.data.per_class;
  s.seed = cfg.data_seed;
  s.sigma = cfg.data.sigma;
  s.modes_per_class = cfg.data.modes_per_class;
  s.antipodal = cfg.data.antipodal;
  return s;
}

/// Loads or generates the train/test data a config describes.
inline data::LabeledData build_data(const ExperimentConfig& cfg) {
  const auto resolve = [](const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path : data_root() / path;
  };
  switch (cfg.data.source) {
    case DataSource::synthetic: return data::gen_synthetic_split(synthetic_spec(cfg), cfg.data.test_per_class);
    case DataSource::cifar10:
    case DataSource::cifar100: {
      const auto v = cfg.data.source == DataSource::cifar10 ? data::CifarVariant::cifar10 : data::CifarVariant::cifar100;
      return {data::load_cifar_binary(resolve(cfg.data.train_path).string(), v),
              data::load_cifar_binary(resolve(cfg.data.test_path).string(), v)};
    }
    case DataSource::tensor:
      return {data::load_tensor_file(resolve(cfg.data.train_path).string()),
              data::load_tensor_file(resolve(cfg.data.test_path).string())};
  }
  throw ConfigError("unknown data source");
}

inline data::TaskStream build_stream(const ExperimentConfig& cfg, const data::LabeledData& d) {
  data::SplitOptions opt;
  opt.n_tasks = cfg.data.n_tasks;
  opt.seed = cfg.data_seed;
  opt.val_fraction = cfg.data.val_fraction;
  opt.shuffle_classes = cfg.data.shuffle_classes;
  return data::split_tasks(d.train, d.test, opt);
}

/// Held-out domain for downstream transfer: same generator with every
/// cluster mean shifted.
inline data::LabeledData downstream_data(const ExperimentConfig& cfg) {
  auto spec = synthetic_spec(cfg);
  spec.domain_shift = cfg.eval.downstream_shift;
  return data::gen_synthetic_split(spec, cfg.data.test_per_class);
}

/// All-class linear probe on the raw inputs.
inline double raw_probe_baseline(const ExperimentConfig& cfg, const data::LabeledData& d,
                                 const data::TaskStream& stream) {
  const auto n = stream.size();
  const auto tr = stream.train_upto(n), va = stream.val_upto(n), te = stream.test_upto(n);
  const auto probe = eval::train_linear_probe(eval::raw_features(d.train, tr), eval::raw_features(d.train, va),
                                              cfg.eval.probe);
  return probe.accuracy(eval::raw_features(d.test, te));
}

/// Probe-based evaluation of every session of a run.
struct RunEvaluation {
  eval::AccuracyMatrix matrix;
  /// CKA of task-1 test features between session 1 and each session.
  std::vector<double> cka_task1;
  double downstream = eval::kMissing;
  /// Probe on raw inputs over all classes; the representation-free floor.
  double raw_baseline = eval::kMissing;
};

template <std::floating_point T = double>
RunEvaluation evaluate_run(const ExperimentConfig& cfg, const data::LabeledData& d, const data::TaskStream& stream,
                           const std::vector<nets::StateDict>& sessions, bool with_raw_baseline = false) {
  std::vector<nets::Mlp<T>> encoders;
  encoders.reserve(sessions.size());
  for (const auto& st : sessions) encoders.push_back(session_encoder<T>(cfg, st));
  std::vector<const nets::Mlp<T>*> ptrs;
  for (const auto& e : encoders) ptrs.push_back(&e);

  RunEvaluation out;
  eval::MatrixOptions mo;
  mo.kind = cfg.eval.matrix == MatrixMode::aware ? eval::MatrixKind::aware : eval::MatrixKind::agnostic;
  mo.future_data = cfg.eval.future_data;
  mo.probe = cfg.eval.probe;
  out.matrix = eval::eval_matrix<T>(ptrs, d.train, d.test, stream, mo);
  for (const auto& e : encoders) {
    out.cka_task1.push_back(eval::cka_between(encoders.front(), e, d.test, stream.tasks.front().test,
                                              cfg.eval.cka_samples));
  }
  if (cfg.eval.downstream_shift > 0.0) {
    if (cfg.data.source != DataSource::synthetic) throw ConfigError("eval.downstream_shift needs synthetic data");
    out.downstream = eval::downstream_eval(encoders.back(), downstream_data(cfg), cfg.eval.probe);
  }
  if (with_raw_baseline) out.raw_baseline = raw_probe_baseline(cfg, d, stream);
  return out;
}

inline std::string default_run_id(const ExperimentConfig& cfg) {
  return cfg.name + "-" + to_string(cfg.method) + "-l" + eval::format_value(cfg.strength()) + "-s" +
         std::to_string(cfg.init_seed);
}

/// Metric rows of one evaluated run.
inline std::vector<eval::MetricRow> metric_rows(const ExperimentConfig& cfg, const RunEvaluation& ev,
                                                const std::vector<TaskTrace>& traces, const std::string& run_id) {
  std::vector<eval::MetricRow> rows;
  const auto push = [&](std::size_t session, std::size_t task, const std::string& metric, double value) {
    rows.push_back({run_id, to_string(cfg.method), cfg.strength(), cfg.init_seed, session, task, metric, value});
  };
  const auto& a = ev.matrix;
  const std::string cell = cfg.eval.matrix == MatrixMode::aware ? "acc_aware" : "acc_agnostic";
  for (std::size_t k = 0; k < a.sessions(); ++k) {
    push(k + 1, 0, "acc_all", a.agnostic[k]);
    for (std::size_t j = 0; j < a.tasks(); ++j) {
      if (!std::isnan(a.cells[k][j])) push(k + 1, j + 1, cell, a.cells[k][j]);
    }
    if (k > 0) push(k + 1, 0, "forgetting", eval::forgetting(a, k));
    push(k + 1, 1, "cka_task1", ev.cka_task1.at(k));
  }
  for (const auto& tr : traces) {
    if (!tr.ssl.empty()) push(tr.task + 1, 0, "ssl_loss", tr.ssl.back());
    if (!tr.reg.empty()) push(tr.task + 1, 0, "reg_loss", tr.reg.back());
  }
  if (!std::isnan(ev.downstream)) push(a.sessions(), 0, "downstream", ev.downstream);
  if (!std::isnan(ev.raw_baseline)) push(0, 0, "raw_baseline", ev.raw_baseline);
  return rows;
}

template <std::floating_point T>
struct ExperimentResult {
  RunResult<T> run;
  RunEvaluation evaluation;
  std::vector<eval::MetricRow> rows;
};

/// Builds the data, trains every session, evaluates them and (with an
/// output directory) writes metrics.csv next to the checkpoints. An empty
/// run id selects default_run_id(cfg).
template <std::floating_point T = double>
ExperimentResult<T> run_experiment(const ExperimentConfig& cfg, const RunOptions& opt = {},
                                   bool with_raw_baseline = false, const std::string& run_id = {}) {
  const auto d = build_data(cfg);
  const auto stream = build_stream(cfg, d);
  ExperimentResult<T> out;
  out.run = run_sequence<T>(d.train, stream, cfg, opt);
  out.evaluation = evaluate_run<T>(cfg, d, stream, out.run.sessions, with_raw_baseline);
  out.rows = metric_rows(cfg, out.evaluation, out.run.traces, run_id.empty() ? default_run_id(cfg) : run_id);
  if (opt.out_dir) eval::write_csv((*opt.out_dir / "metrics.csv").string(), out.rows);
  return out;
}

}  // namespace pfr::train
