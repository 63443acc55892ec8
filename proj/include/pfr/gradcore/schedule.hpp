// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>

#include "pfr/errors.hpp"

namespace pfr {

/// Learning-rate schedule.
///
/// - cosine: anneals from `initial` to `floor` over `anneal_steps`, then holds
///   `post_anneal_factor * floor` for the rest of the session.
/// - constant: always `initial`.
/// - patience: starts at `initial`; `observe` lowers it by `decay_factor`
///   after `patience` evaluations without improvement, at most `max_decays`
///   times.
class LRSchedule {
 public:
  enum class Kind { cosine, constant, patience };

  static LRSchedule cosine(double initial, std::size_t anneal_steps, double floor,
                           double post_anneal_factor = 1.0) {
    if (anneal_steps == 0) throw ConfigError("cosine schedule needs at least one annealing step");
    if (!(floor > 0.0) || floor > initial) throw ConfigError("cosine floor must lie in (0, initial]");
    if (!(post_anneal_factor > 0.0) || post_anneal_factor > 1.0) {
      throw ConfigError("post-annealing factor must lie in (0, 1]");
    }
    LRSchedule s(Kind::cosine, initial);
    s.anneal_steps_ = anneal_steps;
    s.floor_ = floor;
    s.post_factor_ = post_anneal_factor;
    return s;
  }

  static LRSchedule constant(double rate) { return LRSchedule(Kind::constant, rate); }

  static LRSchedule patience(double initial, double decay_factor, std::size_t window, std::size_t max_decays) {
    if (!(decay_factor > 0.0 && decay_factor < 1.0)) throw ConfigError("patience decay factor must lie in (0, 1)");
    if (window == 0) throw ConfigError("patience window must be positive");
    LRSchedule s(Kind::patience, initial);
    s.decay_factor_ = decay_factor;
    s.window_ = window;
    s.max_decays_ = max_decays;
    return s;
  }

  Kind kind() const noexcept { return kind_; }
  double initial() const noexcept { return initial_; }
  double floor() const noexcept { return floor_; }
  std::size_t anneal_steps() const noexcept { return anneal_steps_; }
  double post_anneal_factor() const noexcept { return post_factor_; }

  double rate(std::size_t step) const {
    switch (kind_) {
      case Kind::constant: return initial_;
      case Kind::patience: return current_;
      case Kind::cosine:
        if (step >= anneal_steps_) {
          return step == anneal_steps_ ? floor_ : post_factor_ * floor_;
        }
        return floor_ + (initial_ - floor_) * 0.5 *
                            (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                                            static_cast<double>(anneal_steps_)));
    }
    return initial_;
  }

  enum class Event { improved, waiting, decayed, exhausted };

  /// Feeds one validation score (higher is better) to a patience schedule.
  Event observe(double score) {
    if (kind_ != Kind::patience) throw ContractError("observe() applies to patience schedules only");
    if (score > best_) {
      best_ = score;
      stale_ = 0;
      return Event::improved;
    }
    if (++stale_ < window_) return Event::waiting;
    stale_ = 0;
    if (decays_ >= max_decays_) return Event::exhausted;
    ++decays_;
    current_ *= decay_factor_;
    return Event::decayed;
  }

  std::size_t decays() const noexcept { return decays_; }

 private:
  LRSchedule(Kind kind, double initial) : kind_(kind), initial_(initial), current_(initial) {
    if (!(initial > 0.0)) throw ConfigError("learning rate must be positive");
  }

  Kind kind_;
  double initial_;
  double current_;
  std::size_t anneal_steps_ = 0;
  double floor_ = 0.0;
  double post_factor_ = 1.0;
  double decay_factor_ = 0.3;
  std::size_t window_ = 5;
  std::size_t max_decays_ = 3;
  std::size_t decays_ = 0;
  std::size_t stale_ = 0;
  double best_ = -std::numeric_limits<double>::infinity();
};

}  // namespace pfr
