// SPDX-License-Identifier: Apache-2.0
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pfr/cli/aggregate.hpp"
#include "pfr/cli/report.hpp"
#include "pfr/cli/sweep.hpp"
#include "pfr/train/experiment.hpp"
#include "pfr/version.hpp"

extern char** environ;

namespace {

namespace fs = std::filesystem;
using namespace pfr;

constexpr int kExitOk = 0;
constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

struct CommonOptions {
  std::string config;
  std::vector<std::string> sets;
  std::string out;
  std::string seeds;
  bool deterministic = false;
};

std::string config_text(const CommonOptions& o) {
  std::string text = o.config.empty() ? std::string() : train::read_text(o.config);
  for (const auto& s : o.sets) text += "\n" + s;
  return text;
}

train::ExperimentConfig load_config(const CommonOptions& o) { return train::parse_config(config_text(o)); }

template <std::floating_point T>
std::vector<eval::MetricRow> train_one(const train::ExperimentConfig& cfg, const fs::path& dir, bool resume,
                                       const std::string& run_id) {
  const auto r = train::run_experiment<T>(cfg, train::RunOptions{dir, resume}, true, run_id);
  if (r.run.resumed > 0) std::cerr << "resumed " << r.run.resumed << " session(s) from " << dir.string() << "\n";
  return r.rows;
}

std::vector<eval::MetricRow> train_dispatch(const train::ExperimentConfig& cfg, const fs::path& dir, bool resume,
                                            const std::string& run_id) {
  train::write_text_atomic(dir / "config.txt", train::to_text(cfg));
  return cfg.precision == train::Precision::f32 ? train_one<float>(cfg, dir, resume, run_id)
                                                : train_one<double>(cfg, dir, resume, run_id);
}

void print_summary(const std::vector<eval::MetricRow>& rows) {
  std::size_t last = 0;
  for (const auto& r : rows)
    if (r.metric == "acc_all") last = std::max(last, r.session);
  for (const auto& r : rows) {
    if (r.metric == "acc_all" && r.session == last) {
      std::printf("%s final acc_all=%.4f\n", r.run_id.c_str(), r.value);
    }
  }
}

int cmd_train(const CommonOptions& o, bool resume, const std::string& run_id) {
  const fs::path out(o.out);
  fs::create_directories(out);
  auto cfg = load_config(o);
  if (o.seeds.empty()) {
    const auto rows = train_dispatch(cfg, out, resume, run_id);
    print_summary(rows);
    return kExitOk;
  }
  std::vector<eval::MetricRow> all;
  for (auto seed : cli::parse_seeds(o.seeds)) {
    cfg.set_seed(seed);
    const auto dir = out / ("seed_" + std::to_string(seed));
    fs::create_directories(dir);
    const auto rows = train_dispatch(cfg, dir, resume, run_id.empty() ? "" : run_id + "-s" + std::to_string(seed));
    all.insert(all.end(), rows.begin(), rows.end());
  }
  eval::write_csv((out / "metrics.csv").string(), all);
  train::write_text_atomic(out / "aggregate.csv", cli::aggregate_csv(cli::aggregate(all)));
  print_summary(all);
  return kExitOk;
}

/// Executable path of this process, for spawning sweep workers.
std::string self_exe() {
  std::error_code ec;
  const auto p = fs::read_symlink("/proc/self/exe", ec);
  if (ec) throw ContractError("cannot resolve /proc/self/exe: " + ec.message());
  return p.string();
}

pid_t spawn_worker(const std::string& exe, const cli::SweepRun& run, const fs::path& dir) {
  std::vector<std::string> args{exe, "train", "--config", (dir / "config.txt").string(), "--out", dir.string(),
                                "--run-id", run.id};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t pid = 0;
  if (posix_spawn(&pid, exe.c_str(), nullptr, nullptr, argv.data(), environ) != 0) {
    throw ContractError("failed to start worker for " + run.id);
  }
  return pid;
}

int cmd_sweep(const CommonOptions& o, std::size_t jobs, bool resume) {
  auto spec = cli::parse_sweep(config_text(o));
  if (!o.seeds.empty()) spec.seeds = cli::parse_seeds(o.seeds);
  const auto runs = cli::expand(spec);
  const fs::path out(o.out);
  fs::create_directories(out);
  for (const auto& r : runs) {
    fs::create_directories(out / r.id);
    train::write_text_atomic(out / r.id / "config.txt", train::to_text(r.cfg));
  }
  std::printf("sweep: %zu runs\n", runs.size());
  int worst = kExitOk;
  if (jobs <= 1) {
    for (const auto& r : runs) {
      const auto rows = train_dispatch(r.cfg, out / r.id, resume, r.id);
      print_summary(rows);
    }
  } else {
    const auto exe = self_exe();
    std::size_t next = 0, running = 0;
    std::map<pid_t, std::string> active;
    while (next < runs.size() || running > 0) {
      while (running < jobs && next < runs.size()) {
        active[spawn_worker(exe, runs[next], out / runs[next].id)] = runs[next].id;
        ++next;
        ++running;
      }
      int status = 0;
      const pid_t pid = waitpid(-1, &status, 0);
      if (pid < 0) throw ContractError("waitpid failed");
      --running;
      const int code = WIFEXITED(status) ? WEXITSTATUS(status) : kExitOther;
      if (code != kExitOk) {
        std::cerr << "run " << active[pid] << " failed with exit code " << code << "\n";
        if (worst == kExitOk || code == kExitConfig) worst = code;
      }
      active.erase(pid);
    }
  }
  if (worst != kExitOk) return worst;
  std::vector<eval::MetricRow> all;
  for (const auto& r : runs) {
    const auto rows = eval::read_csv((out / r.id / "metrics.csv").string());
    all.insert(all.end(), rows.begin(), rows.end());
  }
  eval::write_csv((out / "metrics.csv").string(), all);
  train::write_text_atomic(out / "aggregate.csv", cli::aggregate_csv(cli::aggregate(all)));
  std::printf("wrote %s\n", (out / "aggregate.csv").string().c_str());
  return kExitOk;
}

int cmd_report(const std::string& input, const std::string& kind_name, const std::string& out_dir) {
  const auto kind = cli::parse_report_kind(kind_name);
  fs::path csv(input);
  if (fs::is_directory(csv)) csv /= "metrics.csv";
  if (!fs::exists(csv)) throw ConfigError("no metrics CSV at " + csv.string());
  const auto rep = cli::make_report(eval::read_csv(csv.string()), kind);
  const fs::path out = out_dir.empty() ? csv.parent_path() : fs::path(out_dir);
  fs::create_directories(out);
  const auto base = out / ("report_" + kind_name);
  train::write_text_atomic(base.string() + ".csv", rep.csv);
  train::write_text_atomic(base.string() + ".svg", rep.svg);
  std::printf("wrote %s.csv and %s.svg\n", base.string().c_str(), base.string().c_str());
  return kExitOk;
}

int cmd_eval(const CommonOptions& o, const std::string& checkpoint) {
  const auto cfg = load_config(o);
  const auto st = nets::decode_checkpoint(io::read_all(checkpoint));
  const auto encoder = train::session_encoder<double>(cfg, st);
  const auto d = train::build_data(cfg);
  const auto stream = train::build_stream(cfg, d);
  const auto n = stream.size();
  std::vector<eval::MetricRow> rows;
  const auto push = [&](const std::string& metric, double v) {
    rows.push_back({"eval", train::to_string(cfg.method), cfg.strength(), cfg.init_seed, 0, 0, metric, v});
  };
  push("acc_all", eval::probe_accuracy(encoder, d.train, stream.train_upto(n), stream.val_upto(n), d.test,
                                       stream.test_upto(n), cfg.eval.probe));
  if (cfg.eval.downstream_shift > 0.0) {
    push("downstream", eval::downstream_eval(encoder, train::downstream_data(cfg), cfg.eval.probe));
  }
  if (o.out.empty()) {
    std::cout << eval::to_csv(rows);
  } else {
    eval::write_csv(o.out, rows);
  }
  return kExitOk;
}

void add_common(CLI::App* cmd, CommonOptions& o, bool out_required) {
  cmd->add_option("--config", o.config, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "extra key=value override (repeatable)");
  auto* out = cmd->add_option("--out", o.out, "output directory");
  if (out_required) out->required();
  cmd->add_option("--seeds", o.seeds, "comma-separated seeds; each sets data, init and augmentation seeds");
  cmd->add_flag("--deterministic", o.deterministic, "accepted for compatibility; runs are always deterministic");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual self-supervised learning with projected functional regularization"};
  app.set_version_flag("--version", pfr::kVersion);
  app.require_subcommand(1);

  CommonOptions train_opt, sweep_opt, eval_opt;
  bool no_resume = false;
  std::string run_id;
  auto* train_cmd = app.add_subcommand("train", "train one run (or one per seed) and write metrics.csv");
  add_common(train_cmd, train_opt, true);
  train_cmd->add_flag("--no-resume", no_resume, "ignore checkpoints already in the output directory");
  train_cmd->add_option("--run-id", run_id, "run id written to the CSV");

  std::size_t jobs = 1;
  auto* sweep_cmd = app.add_subcommand("sweep", "expand sweep.<key> axes and run every combination");
  add_common(sweep_cmd, sweep_opt, true);
  sweep_cmd->add_option("--jobs", jobs, "parallel worker processes")->check(CLI::PositiveNumber);
  sweep_cmd->add_flag("--no-resume", no_resume, "ignore checkpoints already in the output directories");

  std::string report_input, report_kind = "matrix", report_out;
  auto* report_cmd = app.add_subcommand("report", "write CSV and SVG reports from a run or sweep directory");
  report_cmd->add_option("input", report_input, "run or sweep directory, or a metrics CSV")->required();
  report_cmd->add_option("--kind", report_kind, "matrix, frontier or curves");
  report_cmd->add_option("--out", report_out, "output directory (defaults to the input directory)");

  std::string checkpoint;
  auto* eval_cmd = app.add_subcommand("eval", "probe a stored checkpoint on the configured dataset");
  add_common(eval_cmd, eval_opt, false);
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*train_cmd) return cmd_train(train_opt, !no_resume, run_id);
    if (*sweep_cmd) return cmd_sweep(sweep_opt, jobs, !no_resume);
    if (*report_cmd) return cmd_report(report_input, report_kind, report_out);
    if (*eval_cmd) return cmd_eval(eval_opt, checkpoint);
  } catch (const pfr::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const pfr::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const pfr::FormatError& e) {
    std::cerr << "format error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const pfr::DimensionError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitOther;
  }
  return kExitOther;
}
