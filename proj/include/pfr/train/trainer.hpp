// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pfr/data/augment.hpp"
#include "pfr/data/tasks.hpp"
#include "pfr/gradcore/optim.hpp"
#include "pfr/gradcore/schedule.hpp"
#include "pfr/losses/ssl.hpp"
#include "pfr/nets/bundle.hpp"
#include "pfr/train/config.hpp"

namespace pfr::train {

/// Per-epoch means of the objective terms for one session.
struct TaskTrace {
  std::size_t task = 0;
  std::size_t steps = 0;
  std::vector<double> ssl;
  std::vector<double> reg;
  std::vector<double> total;
};

template <std::floating_point T>
struct TrainState {
  /// 0-based index of the session being (or about to be) trained.
  std::size_t task = 0;
  nets::ModelBundle<T> model;
  std::optional<nets::Snapshot<T>> snapshot;
  losses::FisherDiag<T> fisher;
  std::size_t global_step = 0;
  std::vector<TaskTrace> traces;

  static TrainState fresh(const ExperimentConfig& cfg) {
    TrainState s;
    s.model = nets::ModelBundle<T>::create(cfg.arch, cfg.init_seed, cfg.ssl == SslVariant::simsiam);
    return s;
  }
};

/// Whether `method` keeps a previous-encoder snapshot.
inline bool uses_snapshot(Method m) { return m == Method::fd || m == Method::pfr; }

/// The terms of one minibatch objective. `reg` is the unscaled regularizer
/// (undefined when the method has none at this point) and
/// total = ssl + strength * reg.
template <std::floating_point T>
struct ObjectiveTerms {
  BasicTensor<T> ssl;
  BasicTensor<T> reg;
  BasicTensor<T> total;
};

template <std::floating_point T>
BasicTensor<T> ssl_objective(nets::ModelBundle<T>& model, const BasicTensor<T>& fa, const BasicTensor<T>& fb,
                             const ExperimentConfig& cfg) {
  const auto za = nets::forward_projector(model, fa);
  const auto zb = nets::forward_projector(model, fb);
  switch (cfg.ssl) {
    case SslVariant::barlow:
      return losses::barlow_loss(losses::cross_correlation(za, zb, cfg.standardize), static_cast<T>(cfg.lambda_bt));
    case SslVariant::simclr: return losses::ntxent_loss(za, zb, static_cast<T>(cfg.temperature));
    case SslVariant::simsiam: {
      const auto pa = nets::forward_predictor(model, za);
      const auto pb = nets::forward_predictor(model, zb);
      return losses::simsiam_loss(pa, zb, pb, za);
    }
  }
  throw ContractError("unknown ssl variant");
}

template <std::floating_point T>
BasicTensor<T> combine_views(const BasicTensor<T>& a, const BasicTensor<T>& b, ViewReduction r) {
  const auto s = add(a, b);
  return r == ViewReduction::mean ? scale(s, T(0.5)) : s;
}

/// Forms the session objective on one view batch. Running statistics of
/// batchnorm layers advance as in a training step.
template <std::floating_point T>
ObjectiveTerms<T> compute_objective(TrainState<T>& state, const data::ViewBatch<T>& views,
                                    const ExperimentConfig& cfg) {
  auto& model = state.model;
  const auto fa = nets::forward_encoder(model, views.view_a);
  const auto fb = nets::forward_encoder(model, views.view_b);
  ObjectiveTerms<T> out;
  out.ssl = ssl_objective(model, fa, fb, cfg);
  const double lambda = cfg.strength();
  const bool regularized = state.task > 0 && lambda != 0.0;
  if (regularized) {
    switch (cfg.method) {
      case Method::fd:
      case Method::pfr: {
        if (!state.snapshot) throw ContractError("session " + std::to_string(state.task + 1) + " has no snapshot");
        const auto pa = nets::forward_snapshot(*state.snapshot, views.view_a);
        const auto pb = nets::forward_snapshot(*state.snapshot, views.view_b);
        if (cfg.method == Method::fd) {
          out.reg = combine_views(losses::fd_loss(fa, pa, cfg.fd_squared), losses::fd_loss(fb, pb, cfg.fd_squared),
                                  cfg.view_reduction);
        } else {
          const auto ma = nets::forward_temporal(model, fa);
          const auto mb = nets::forward_temporal(model, fb);
          out.reg = combine_views(losses::pfr_loss(ma, pa), losses::pfr_loss(mb, pb), cfg.view_reduction);
        }
        break;
      }
      case Method::ewc:
        if (state.fisher.empty()) throw ContractError("session " + std::to_string(state.task + 1) + " has no Fisher");
        out.reg = losses::ewc_penalty(model.encoder.named_parameters("encoder"), state.fisher);
        break;
      default: break;
    }
  }
  out.total = out.reg.defined() ? add(out.ssl, scale(out.reg, static_cast<T>(lambda))) : out.ssl;
  return out;
}

/// Backbone and head learning-rate tracks of one session.
struct SessionSchedules {
  LRSchedule backbone;
  LRSchedule heads;
};

inline SessionSchedules make_schedules(const ExperimentConfig& cfg, std::size_t steps_per_epoch) {
  const std::size_t anneal = std::max<std::size_t>(1, cfg.anneal_epochs * steps_per_epoch);
  return {LRSchedule::cosine(cfg.lr, anneal, cfg.lr_floor, cfg.backbone_post_factor),
          LRSchedule::cosine(cfg.lr, anneal, cfg.lr_floor, cfg.projector_post_factor)};
}

/// Minibatch seed of (session, epoch); views derive their own per-sample
/// streams from it.
inline std::uint64_t epoch_seed(const ExperimentConfig& cfg, std::size_t task, std::size_t epoch) {
  return derive_seed(cfg.aug_seed, 0x65706f63ULL, task, epoch);
}

/// Trains the current session of `state` on `train_idx` of `ds`.
template <std::floating_point T>
TaskTrace train_task(TrainState<T>& state, const data::Dataset& ds, std::span<const std::size_t> train_idx,
                     const ExperimentConfig& cfg) {
  if (uses_snapshot(cfg.method) && state.task > 0 && !state.snapshot) {
    throw ContractError("session " + std::to_string(state.task + 1) + " needs a snapshot of the previous encoder");
  }
  if (ds.dim != cfg.arch.input_dim) {
    throw DimensionError("dataset dimension " + std::to_string(ds.dim) + " differs from arch.input_dim " +
                         std::to_string(cfg.arch.input_dim));
  }
  const auto policy = cfg.policy();
  const std::size_t steps_per_epoch = train_idx.size() / cfg.batch_size + (train_idx.size() % cfg.batch_size >= 2);
  if (steps_per_epoch == 0) throw ConfigError("session " + std::to_string(state.task + 1) + " has too few samples");
  const auto sched = make_schedules(cfg, steps_per_epoch);
  Sgd<T> backbone_opt(static_cast<T>(cfg.momentum), static_cast<T>(cfg.weight_decay));
  Sgd<T> head_opt(static_cast<T>(cfg.momentum), static_cast<T>(cfg.weight_decay));
  const bool with_temporal = cfg.method == Method::pfr && state.task > 0 && cfg.lambda_pfr != 0.0;

  TaskTrace trace;
  trace.task = state.task;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs_per_task; ++epoch) {
    const auto seed = epoch_seed(cfg, state.task, epoch);
    double ssl_sum = 0.0, reg_sum = 0.0, total_sum = 0.0;
    const auto batches = data::minibatches(train_idx, cfg.batch_size, seed);
    for (const auto& batch : batches) {
      const auto views = data::make_views<T>(ds, batch, policy, seed);
      const auto terms = compute_objective(state, views, cfg);
      const double total = static_cast<double>(terms.total.item());
      if (!std::isfinite(total)) {
        throw NumericError("non-finite loss at session " + std::to_string(state.task + 1) + ", step " +
                           std::to_string(step));
      }
      backward(terms.total);
      auto backbone = state.model.backbone_parameters();
      auto heads = state.model.head_parameters(with_temporal);
      for (auto* group : {&backbone, &heads}) {
        for (auto& p : *group) {
          if (!all_finite(p.grad())) {
            throw NumericError("non-finite gradient at session " + std::to_string(state.task + 1) + ", step " +
                               std::to_string(step));
          }
        }
      }
      backbone_opt.step(backbone, static_cast<T>(sched.backbone.rate(step)));
      head_opt.step(heads, static_cast<T>(sched.heads.rate(step)));
      ssl_sum += static_cast<double>(terms.ssl.item());
      reg_sum += terms.reg.defined() ? static_cast<double>(terms.reg.item()) : 0.0;
      total_sum += total;
      ++step;
      ++state.global_step;
    }
    const double n = static_cast<double>(batches.size());
    trace.ssl.push_back(ssl_sum / n);
    trace.reg.push_back(reg_sum / n);
    trace.total.push_back(total_sum / n);
  }
  trace.steps = step;
  return trace;
}

/// Fisher diagonal of the encoder under the session's SSL loss, computed on
/// a copy of the model so running statistics stay untouched.
template <std::floating_point T>
losses::FisherDiag<T> session_fisher(const TrainState<T>& state, const data::Dataset& ds,
                                     std::span<const std::size_t> train_idx, const ExperimentConfig& cfg) {
  TrainState<T> probe;
  probe.model = state.model;
  probe.model.encoder = state.model.encoder.clone();
  probe.model.projector = state.model.projector.clone();
  if (state.model.predictor) probe.model.predictor = state.model.predictor->clone();
  probe.model.temporal.reset();
  const auto policy = cfg.policy();
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t round = 0; batches.size() < cfg.fisher_batches; ++round) {
    auto more = data::minibatches(train_idx, cfg.batch_size, derive_seed(cfg.aug_seed, 0x66697368ULL, state.task, round));
    if (more.empty()) throw ConfigError("too few samples to estimate the Fisher diagonal");
    for (auto& b : more) {
      if (batches.size() < cfg.fisher_batches) batches.push_back(std::move(b));
    }
  }
  const auto seed = derive_seed(cfg.aug_seed, 0x66697368ULL, state.task);
  const std::function<BasicTensor<T>(std::size_t)> loss = [&](std::size_t b) {
    const auto views = data::make_views<T>(ds, batches[b], policy, derive_seed(seed, b));
    const auto fa = nets::forward_encoder(probe.model, views.view_a);
    const auto fb = nets::forward_encoder(probe.model, views.view_b);
    return ssl_objective(probe.model, fa, fb, cfg);
  };
  return losses::estimate_fisher(probe.model.encoder.named_parameters("encoder"), loss, cfg.fisher_batches);
}

/// Moves `state` across the boundary after session `state.task`: snapshot
/// for FD/PFR, consolidated Fisher for EWC.
template <std::floating_point T>
void finish_session(TrainState<T>& state, const data::Dataset& ds, std::span<const std::size_t> train_idx,
                    const ExperimentConfig& cfg) {
  if (uses_snapshot(cfg.method)) state.snapshot.emplace(nets::take_snapshot(state.model));
  if (cfg.method == Method::ewc) state.fisher.consolidate(session_fisher(state, ds, train_idx, cfg));
  ++state.task;
}

/// Prepares the model for session `state.task` (fresh temporal projector).
template <std::floating_point T>
void begin_session(TrainState<T>& state, const ExperimentConfig& cfg) {
  if (cfg.method == Method::pfr && state.task > 0) state.model.reset_temporal(state.task);
}

/// Training indices of session `t`: the task's own samples, or everything
/// seen so far for continual joint training.
inline std::vector<std::size_t> session_indices(const data::TaskStream& stream, std::size_t t, Method m) {
  return m == Method::cj ? stream.train_upto(t + 1) : stream.tasks.at(t).train;
}

}  // namespace pfr::train
