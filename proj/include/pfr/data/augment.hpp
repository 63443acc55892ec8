// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pfr/data/dataset.hpp"
#include "pfr/gradcore/tensor.hpp"
#include "pfr/util/rng.hpp"

namespace pfr::data {

// Vector-mode transforms.

struct GaussianNoise {
  double sigma = 0.1;
  double p = 1.0;
};

/// Zeroes each coordinate independently with probability `fraction`.
struct CoordinateDropout {
  double fraction = 0.2;
  double p = 1.0;
};

struct GlobalScaling {
  double lo = 0.8;
  double hi = 1.2;
  double p = 1.0;
};

// Image-mode transforms over CHW planes in [0, 1].

struct ResizedCrop {
  double scale_lo = 0.2;
  double scale_hi = 1.0;
  double ratio_lo = 3.0 / 4.0;
  double ratio_hi = 4.0 / 3.0;
  double p = 1.0;
};

struct HorizontalFlip {
  double p = 0.5;
};

struct ColorJitter {
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double p = 0.8;
};

struct Grayscale {
  double p = 0.2;
};

using Transform =
    std::variant<GaussianNoise, CoordinateDropout, GlobalScaling, ResizedCrop, HorizontalFlip, ColorJitter, Grayscale>;

struct ImageGeometry {
  std::size_t channels = 3;
  std::size_t height = 32;
  std::size_t width = 32;
};

/// Ordered list of stochastic transforms. Every transform preserves the
/// input dimensionality.
struct AugmentationPolicy {
  std::vector<Transform> transforms;
  ImageGeometry image{};

  static AugmentationPolicy identity() { return {}; }

  static AugmentationPolicy vector_default(double sigma = 0.1, double dropout = 0.2, double scale_lo = 0.8,
                                           double scale_hi = 1.2) {
    AugmentationPolicy p;
    p.transforms = {CoordinateDropout{dropout, 1.0}, GlobalScaling{scale_lo, scale_hi, 1.0},
                    GaussianNoise{sigma, 1.0}};
    return p;
  }

  /// Crop, flip, color jitter and grayscale; blur is omitted at 32x32.
  static AugmentationPolicy image_default(ImageGeometry geometry = {}) {
    AugmentationPolicy p;
    p.image = geometry;
    p.transforms = {ResizedCrop{}, HorizontalFlip{}, ColorJitter{}, Grayscale{}};
    return p;
  }

  void validate() const {
    for (const auto& t : transforms) {
      const double prob = std::visit([](const auto& x) { return x.p; }, t);
      if (!(prob >= 0.0 && prob <= 1.0)) throw ConfigError("transform probability outside [0, 1]");
    }
  }
};

namespace detail {

inline void apply(const GaussianNoise& t, std::vector<double>& x, const ImageGeometry&, Rng& rng) {
  for (auto& v : x) v += t.sigma * rng.normal();
}

inline void apply(const CoordinateDropout& t, std::vector<double>& x, const ImageGeometry&, Rng& rng) {
  for (auto& v : x) {
    if (rng.bernoulli(t.fraction)) v = 0.0;
  }
}

inline void apply(const GlobalScaling& t, std::vector<double>& x, const ImageGeometry&, Rng& rng) {
  const double s = rng.uniform(t.lo, t.hi);
  for (auto& v : x) v *= s;
}

inline void require_image(const std::vector<double>& x, const ImageGeometry& g) {
  if (x.size() != g.channels * g.height * g.width) {
    throw DimensionError("image transform expects " + std::to_string(g.channels * g.height * g.width) +
                         " values, got " + std::to_string(x.size()));
  }
}

inline void apply(const ResizedCrop& t, std::vector<double>& x, const ImageGeometry& g, Rng& rng) {
  require_image(x, g);
  const double area = rng.uniform(t.scale_lo, t.scale_hi);
  const double log_ratio = rng.uniform(std::log(t.ratio_lo), std::log(t.ratio_hi));
  const double ratio = std::exp(log_ratio);
  const double cw = std::clamp(std::sqrt(area * ratio) * static_cast<double>(g.width), 1.0, static_cast<double>(g.width));
  const double ch = std::clamp(std::sqrt(area / ratio) * static_cast<double>(g.height), 1.0, static_cast<double>(g.height));
  const double x0 = rng.uniform(0.0, static_cast<double>(g.width) - cw);
  const double y0 = rng.uniform(0.0, static_cast<double>(g.height) - ch);
  std::vector<double> out(x.size());
  const auto at = [&](std::size_t c, double yy, double xx) {
    // Bilinear sample with edge clamping.
    yy = std::clamp(yy, 0.0, static_cast<double>(g.height - 1));
    xx = std::clamp(xx, 0.0, static_cast<double>(g.width - 1));
    const auto y_lo = static_cast<std::size_t>(yy), x_lo = static_cast<std::size_t>(xx);
    const std::size_t y_hi = std::min(y_lo + 1, g.height - 1), x_hi = std::min(x_lo + 1, g.width - 1);
    const double fy = yy - static_cast<double>(y_lo), fx = xx - static_cast<double>(x_lo);
    const double* plane = x.data() + c * g.height * g.width;
    const double top = plane[y_lo * g.width + x_lo] * (1 - fx) + plane[y_lo * g.width + x_hi] * fx;
    const double bot = plane[y_hi * g.width + x_lo] * (1 - fx) + plane[y_hi * g.width + x_hi] * fx;
    return top * (1 - fy) + bot * fy;
  };
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t r = 0; r < g.height; ++r)
      for (std::size_t q = 0; q < g.width; ++q) {
        const double sy = y0 + (static_cast<double>(r) + 0.5) * ch / static_cast<double>(g.height) - 0.5;
        const double sx = x0 + (static_cast<double>(q) + 0.5) * cw / static_cast<double>(g.width) - 0.5;
        out[(c * g.height + r) * g.width + q] = at(c, sy, sx);
      }
  x = std::move(out);
}

inline void apply(const HorizontalFlip&, std::vector<double>& x, const ImageGeometry& g, Rng&) {
  require_image(x, g);
  for (std::size_t c = 0; c < g.channels; ++c)
    for (std::size_t r = 0; r < g.height; ++r) {
      double* row = x.data() + (c * g.height + r) * g.width;
      std::reverse(row, row + g.width);
    }
}

inline void to_gray(std::vector<double>& x, const ImageGeometry& g, double blend) {
  if (g.channels != 3) return;
  const std::size_t n = g.height * g.width;
  for (std::size_t i = 0; i < n; ++i) {
    const double lum = 0.299 * x[i] + 0.587 * x[n + i] + 0.114 * x[2 * n + i];
    for (std::size_t c = 0; c < 3; ++c) x[c * n + i] = blend * lum + (1.0 - blend) * x[c * n + i];
  }
}

inline void apply(const ColorJitter& t, std::vector<double>& x, const ImageGeometry& g, Rng& rng) {
  require_image(x, g);
  const double b = rng.uniform(std::max(0.0, 1.0 - t.brightness), 1.0 + t.brightness);
  for (auto& v : x) v *= b;
  const double c = rng.uniform(std::max(0.0, 1.0 - t.contrast), 1.0 + t.contrast);
  double m = 0.0;
  for (double v : x) m += v;
  m /= static_cast<double>(x.size());
  for (auto& v : x) v = m + c * (v - m);
  const double s = rng.uniform(std::max(0.0, 1.0 - t.saturation), 1.0 + t.saturation);
  to_gray(x, g, 1.0 - s);
  for (auto& v : x) v = std::clamp(v, 0.0, 1.0);
}

inline void apply(const Grayscale&, std::vector<double>& x, const ImageGeometry& g, Rng&) {
  require_image(x, g);
  to_gray(x, g, 1.0);
}

}  // namespace detail

/// Draws one augmented view. The random stream is a pure function of
/// (seed, source_index, view_id); every transform consumes one probability
/// draw whether or not it fires.
inline std::vector<double> augment(const AugmentationPolicy& policy, const Sample& s, std::uint64_t seed,
                                   std::uint64_t view_id) {
  Rng rng(derive_seed(seed, s.source_index, view_id));
  std::vector<double> x = s.input;
  for (const auto& t : policy.transforms) {
    std::visit(
        [&](const auto& tr) {
          const bool fire = rng.uniform() < tr.p;
          if (fire) detail::apply(tr, x, policy.image, rng);
        },
        t);
  }
  return x;
}

/// Two augmented views of one batch; row i of both derives from sample i.
template <std::floating_point T>
struct ViewBatch {
  BasicTensor<T> view_a;
  BasicTensor<T> view_b;
  std::vector<std::size_t> source;
};

template <std::floating_point T = double>
ViewBatch<T> make_views(const Dataset& ds, std::span<const std::size_t> batch, const AugmentationPolicy& policy,
                        std::uint64_t rng_seed) {
  if (batch.empty()) throw ContractError("make_views needs a non-empty batch");
  std::vector<T> a, b;
  a.reserve(batch.size() * ds.dim);
  b.reserve(batch.size() * ds.dim);
  ViewBatch<T> out;
  for (auto i : batch) {
    const Sample& s = ds.samples.at(i);
    for (double v : augment(policy, s, rng_seed, 0)) a.push_back(static_cast<T>(v));
    for (double v : augment(policy, s, rng_seed, 1)) b.push_back(static_cast<T>(v));
    out.source.push_back(s.source_index);
  }
  out.view_a = BasicTensor<T>::from_data({batch.size(), ds.dim}, std::move(a));
  out.view_b = BasicTensor<T>::from_data({batch.size(), ds.dim}, std::move(b));
  return out;
}

}  // namespace pfr::data
