// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "pfr/data/dataset.hpp"
#include "pfr/data/tasks.hpp"
#include "pfr/nets/checkpoint.hpp"
#include "pfr/train/trainer.hpp"
#include "pfr/util/hash.hpp"
#include "pfr/version.hpp"

namespace pfr::train {

namespace fs = std::filesystem;

struct RunOptions {
  /// Checkpoints, manifest and timings go here when set.
  std::optional<fs::path> out_dir;
  /// Continue from the last valid checkpoint of a matching run in out_dir.
  bool resume = true;
};

template <std::floating_point T>
struct RunResult {
  /// Full model state after each session.
  std::vector<nets::StateDict> sessions;
  std::vector<TaskTrace> traces;
  std::vector<fs::path> checkpoints;
  /// Sessions restored from disk instead of trained.
  std::size_t resumed = 0;
  TrainState<T> final_state;
};

inline std::string checkpoint_name(std::size_t session) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "checkpoint_%03zu.bin", session + 1);
  return buf;
}

/// Parsed manifest lines in file order.
using Manifest = std::vector<std::pair<std::string, std::string>>;

inline std::string manifest_text(const Manifest& m) {
  std::string out;
  for (const auto& [k, v] : m) out += k + "=" + v + "\n";
  return out;
}

inline Manifest parse_manifest(const std::string& text) {
  Manifest m;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("manifest line without '='", 0);
    m.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return m;
}

inline std::optional<std::string> manifest_get(const Manifest& m, const std::string& key) {
  for (const auto& [k, v] : m)
    if (k == key) return v;
  return std::nullopt;
}

inline Manifest base_manifest(const ExperimentConfig& cfg, const data::TaskStream& stream) {
  Manifest m;
  m.emplace_back("format", "pfr-manifest-1");
  m.emplace_back("library.version", kVersion);
  for (const auto& [k, v] : to_pairs(cfg)) m.emplace_back("config." + k, v);
  m.emplace_back("stream.tasks", std::to_string(stream.size()));
  for (std::size_t t = 0; t < stream.size(); ++t) {
    std::string classes;
    for (int c : stream.tasks[t].classes) classes += (classes.empty() ? "" : ",") + std::to_string(c);
    m.emplace_back("stream.task." + std::to_string(t + 1) + ".classes", classes);
    m.emplace_back("stream.task." + std::to_string(t + 1) + ".train", std::to_string(stream.tasks[t].train.size()));
  }
  return m;
}

inline void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    out << text;
  }
  fs::rename(tmp, path);
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace detail {

template <std::floating_point T>
nets::StateDict session_state(const TrainState<T>& state, const TaskTrace& trace) {
  auto st = state.model.state_dict();
  for (std::size_t p = 0; p < state.fisher.names.size(); ++p) {
    const auto& imp = state.fisher.importance[p];
    const auto& anc = state.fisher.anchor[p];
    st.push_back({"ewc.importance." + state.fisher.names[p], {imp.size()}, {imp.begin(), imp.end()}});
    st.push_back({"ewc.anchor." + state.fisher.names[p], {anc.size()}, {anc.begin(), anc.end()}});
  }
  const auto series = [&](const std::string& name, const std::vector<double>& v) {
    if (!v.empty()) st.push_back({name, {v.size()}, v});
  };
  series("trace.ssl", trace.ssl);
  series("trace.reg", trace.reg);
  series("trace.total", trace.total);
  st.push_back({"trace.steps", {1}, {static_cast<double>(trace.steps)}});
  st.push_back({"state.global_step", {1}, {static_cast<double>(state.global_step)}});
  return st;
}

/// Loads model, Fisher and counters of a stored session into `state` and
/// appends its trace.
template <std::floating_point T>
void restore_session(TrainState<T>& state, const nets::StateDict& st, std::size_t session) {
  state.model.load_state_dict(st);
  state.fisher = {};
  for (const auto& b : st) {
    const std::string pre = "ewc.importance.";
    if (b.name.rfind(pre, 0) != 0) continue;
    const auto name = b.name.substr(pre.size());
    const auto& anchor = nets::find_block(st, "ewc.anchor." + name);
    state.fisher.names.push_back(name);
    state.fisher.importance.emplace_back(b.values.begin(), b.values.end());
    state.fisher.anchor.emplace_back(anchor.values.begin(), anchor.values.end());
  }
  TaskTrace tr;
  tr.task = session;
  if (nets::has_block(st, "trace.ssl")) tr.ssl = nets::find_block(st, "trace.ssl").values;
  if (nets::has_block(st, "trace.reg")) tr.reg = nets::find_block(st, "trace.reg").values;
  if (nets::has_block(st, "trace.total")) tr.total = nets::find_block(st, "trace.total").values;
  tr.steps = static_cast<std::size_t>(nets::find_block(st, "trace.steps").values.at(0));
  state.traces.push_back(std::move(tr));
  state.global_step = static_cast<std::size_t>(nets::find_block(st, "state.global_step").values.at(0));
}

/// Number of leading sessions of a previous matching run that can be
/// restored from `dir`.
inline std::size_t resumable_sessions(const fs::path& dir, const Manifest& expected) {
  const auto path = dir / "manifest.txt";
  if (!fs::exists(path)) return 0;
  const auto found = parse_manifest(read_text(path));
  for (const auto& [k, v] : expected) {
    if (k.rfind("config.", 0) != 0 && k.rfind("stream.", 0) != 0) continue;
    const auto other = manifest_get(found, k);
    if (!other || *other != v) {
      throw ConfigError("output directory " + dir.string() + " holds a different run (key " + k + " differs)");
    }
  }
  std::size_t n = 0;
  while (true) {
    const auto h = manifest_get(found, "session." + std::to_string(n + 1) + ".fnv1a");
    const auto file = dir / checkpoint_name(n);
    if (!h || !fs::exists(file) || hash_bytes(io::read_all(file.string())) != *h) break;
    ++n;
  }
  return n;
}

}  // namespace detail

/// Trains every session of `stream` in order. Session t uses task t's
/// samples (all samples of tasks 1..t for CJ). At each boundary the
/// snapshot / Fisher / temporal projector are refreshed as the method
/// requires. With an output directory, a checkpoint is written after every
/// session and a manifest records the config, stream and checkpoint hashes;
/// an interrupted run continues from its last verified checkpoint.
template <std::floating_point T = double>
RunResult<T> run_sequence(const data::Dataset& train, const data::TaskStream& stream, const ExperimentConfig& cfg,
                          const RunOptions& opt = {}) {
  cfg.validate();
  if (stream.size() == 0) throw ConfigError("task stream is empty");
  RunResult<T> result;
  auto state = TrainState<T>::fresh(cfg);
  Manifest manifest = base_manifest(cfg, stream);
  std::size_t start = 0;
  std::string timings;
  if (opt.out_dir) {
    fs::create_directories(*opt.out_dir);
    if (opt.resume) start = detail::resumable_sessions(*opt.out_dir, manifest);
    if (start > 0 && fs::exists(*opt.out_dir / "timings.txt")) {
      std::istringstream in(read_text(*opt.out_dir / "timings.txt"));
      std::string line;
      for (std::size_t i = 0; i < start && std::getline(in, line);) {
        if (line.rfind("session", 0) == 0) continue;
        timings += line + "\n";
        ++i;
      }
    }
  }
  for (std::size_t t = 0; t < start; ++t) {
    const auto path = *opt.out_dir / checkpoint_name(t);
    const auto bytes = io::read_all(path.string());
    const auto st = nets::decode_checkpoint(bytes);
    detail::restore_session(state, st, t);
    result.sessions.push_back(st);
    result.checkpoints.push_back(path);
    manifest.emplace_back("session." + std::to_string(t + 1) + ".checkpoint", checkpoint_name(t));
    manifest.emplace_back("session." + std::to_string(t + 1) + ".fnv1a", hash_bytes(bytes));
    manifest.emplace_back("session." + std::to_string(t + 1) + ".steps", std::to_string(state.traces.back().steps));
  }
  if (start > 0) {
    if (uses_snapshot(cfg.method)) state.snapshot.emplace(nets::take_snapshot(state.model));
    state.task = start;
  }
  result.resumed = start;
  const auto write_manifest = [&](const std::string& status) {
    if (!opt.out_dir) return;
    auto m = manifest;
    m.emplace(m.begin() + 2, "status", status);
    write_text_atomic(*opt.out_dir / "manifest.txt", manifest_text(m));
  };
  write_manifest("running");

  for (std::size_t t = start; t < stream.size(); ++t) {
    const auto idx = session_indices(stream, t, cfg.method);
    const auto t0 = std::chrono::steady_clock::now();
    begin_session(state, cfg);
    auto trace = train_task(state, train, idx, cfg);
    state.traces.push_back(trace);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    finish_session(state, train, idx, cfg);
    const auto st = detail::session_state(state, trace);
    result.sessions.push_back(st);
    if (opt.out_dir) {
      const auto path = *opt.out_dir / checkpoint_name(t);
      const auto bytes = nets::encode_checkpoint(st);
      io::write_all(path.string() + ".tmp", bytes);
      fs::rename(path.string() + ".tmp", path);
      result.checkpoints.push_back(path);
      manifest.emplace_back("session." + std::to_string(t + 1) + ".checkpoint", checkpoint_name(t));
      manifest.emplace_back("session." + std::to_string(t + 1) + ".fnv1a", hash_bytes(bytes));
      manifest.emplace_back("session." + std::to_string(t + 1) + ".steps", std::to_string(trace.steps));
      char buf[64];
      std::snprintf(buf, sizeof buf, "%zu %.3f\n", t + 1, secs);
      timings += buf;
      write_text_atomic(*opt.out_dir / "timings.txt", "session seconds\n" + timings);
      write_manifest("running");
    }
  }
  write_manifest("complete");
  result.traces = state.traces;
  result.final_state = std::move(state);
  return result;
}

/// Continual joint training: session t trains on the union of tasks 1..t,
/// warm-started from session t-1.
template <std::floating_point T = double>
RunResult<T> run_continual_joint(const data::Dataset& train, const data::TaskStream& stream, ExperimentConfig cfg,
                                 const RunOptions& opt = {}) {
  cfg.method = Method::cj;
  return run_sequence<T>(train, stream, cfg, opt);
}

/// Encoder of a stored session state.
template <std::floating_point T = double>
nets::Mlp<T> session_encoder(const ExperimentConfig& cfg, const nets::StateDict& st) {
  auto model = nets::ModelBundle<T>::create(cfg.arch, cfg.init_seed, cfg.ssl == SslVariant::simsiam);
  model.load_state_dict(st);
  return model.encoder;
}

}  // namespace pfr::train
