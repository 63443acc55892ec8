// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <variant>
#include <vector>

#include "pfr/data/augment.hpp"
#include "pfr/eval/probe.hpp"
#include "pfr/nets/bundle.hpp"

namespace pfr::train {

enum class Method { ft, fd, ewc, pfr, cj };
enum class SslVariant { barlow, simclr, simsiam };
enum class ViewReduction { mean, sum };
enum class DataSource { synthetic, cifar10, cifar100, tensor };
enum class Precision { f64, f32 };
enum class MatrixMode { aware, agnostic };

template <class E>
struct EnumNames;

template <>
struct EnumNames<Method> {
  static constexpr std::array<std::string_view, 5> names{"FT", "FD", "EWC", "PFR", "CJ"};
};
template <>
struct EnumNames<SslVariant> {
  static constexpr std::array<std::string_view, 3> names{"barlow", "simclr", "simsiam"};
};
template <>
struct EnumNames<ViewReduction> {
  static constexpr std::array<std::string_view, 2> names{"mean", "sum"};
};
template <>
struct EnumNames<DataSource> {
  static constexpr std::array<std::string_view, 4> names{"synthetic", "cifar10", "cifar100", "tensor"};
};
template <>
struct EnumNames<Precision> {
  static constexpr std::array<std::string_view, 2> names{"f64", "f32"};
};
template <>
struct EnumNames<MatrixMode> {
  static constexpr std::array<std::string_view, 2> names{"aware", "agnostic"};
};

template <class E>
std::string to_string(E e)
  requires std::is_enum_v<E>
{
  return std::string(EnumNames<E>::names.at(static_cast<std::size_t>(e)));
}

template <class E>
std::string accepted_values() {
  std::string out;
  for (auto n : EnumNames<E>::names) {
    if (!out.empty()) out += ", ";
    out += n;
  }
  return out;
}

template <class E>
E parse_enum(std::string_view text, std::string_view key) {
  const auto& names = EnumNames<E>::names;
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i].size() != text.size()) continue;
    bool same = true;
    for (std::size_t c = 0; c < text.size(); ++c) {
      same = same && std::tolower(static_cast<unsigned char>(names[i][c])) ==
                         std::tolower(static_cast<unsigned char>(text[c]));
    }
    if (same) return static_cast<E>(i);
  }
  throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key) + " (accepted: " +
                    accepted_values<E>() + ")");
}

struct DataConfig {
  DataSource source = DataSource::synthetic;
  /// Train and test files for file-backed sources, relative to the data
  /// root unless absolute.
  std::string train_path;
  std::string test_path;
  std::size_t n_classes = 8;
  std::size_t dim = 16;
  std::size_t per_class = 200;
  std::size_t test_per_class = 100;
  double sigma = 0.1;
  std::size_t modes_per_class = 1;
  bool antipodal = false;
  std::size_t n_tasks = 4;
  double val_fraction = 0.05;
  bool shuffle_classes = true;
};

struct AugmentConfig {
  double noise_sigma = 0.1;
  double dropout = 0.2;
  double scale_lo = 0.8;
  double scale_hi = 1.2;
  bool image = false;
};

struct EvalConfig {
  MatrixMode matrix = MatrixMode::aware;
  bool future_data = false;
  std::size_t cka_samples = 1024;
  /// Shift of the held-out synthetic domain used for downstream transfer;
  /// 0 disables it.
  double downstream_shift = 0.0;
  eval::ProbeConfig probe{};
};

/// Everything a run depends on. Serialized verbatim into the manifest.
struct ExperimentConfig {
  std::string name = "run";
  Method method = Method::ft;
  SslVariant ssl = SslVariant::barlow;
  Precision precision = Precision::f64;

  double lambda_bt = 5e-3;
  double lambda_fd = 0.0;
  double lambda_pfr = 0.0;
  double lambda_ewc = 0.0;
  double temperature = 0.5;
  bool standardize = true;
  bool fd_squared = false;
  ViewReduction view_reduction = ViewReduction::mean;
  std::size_t fisher_batches = 32;

  std::size_t epochs_per_task = 200;
  std::size_t anneal_epochs = 150;
  std::size_t batch_size = 128;
  double lr = 0.06;
  double lr_floor = 0.006;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double backbone_post_factor = 0.4;
  double projector_post_factor = 0.8;

  std::uint64_t data_seed = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t aug_seed = 0;

  nets::ArchSpec arch{};
  DataConfig data{};
  AugmentConfig augment{};
  EvalConfig eval{};

  /// Strength of the active continual regularizer (0 for FT and CJ).
  double strength() const {
    switch (method) {
      case Method::fd: return lambda_fd;
      case Method::pfr: return lambda_pfr;
      case Method::ewc: return lambda_ewc;
      default: return 0.0;
    }
  }

  void set_seed(std::uint64_t s) { data_seed = init_seed = aug_seed = s; }

  data::AugmentationPolicy policy() const {
    if (augment.image) return data::AugmentationPolicy::image_default();
    return data::AugmentationPolicy::vector_default(augment.noise_sigma, augment.dropout, augment.scale_lo,
                                                    augment.scale_hi);
  }

  void validate() const;
};

namespace detail {

static_assert(std::is_same_v<std::size_t, std::uint64_t>, "seed fields share the size_t slot");

using FieldRef = std::variant<std::string*, double*, std::size_t*, bool*, Method*, SslVariant*,
                              ViewReduction*, DataSource*, Precision*, MatrixMode*, std::vector<std::size_t>*>;

template <class Cfg, class F>
void visit_fields(Cfg& c, F&& f) {
  f("run.name", FieldRef(&c.name));
  f("run.method", FieldRef(&c.method));
  f("run.ssl", FieldRef(&c.ssl));
  f("run.precision", FieldRef(&c.precision));
  f("loss.lambda_bt", FieldRef(&c.lambda_bt));
  f("loss.lambda_fd", FieldRef(&c.lambda_fd));
  f("loss.lambda_pfr", FieldRef(&c.lambda_pfr));
  f("loss.lambda_ewc", FieldRef(&c.lambda_ewc));
  f("loss.temperature", FieldRef(&c.temperature));
  f("loss.standardize", FieldRef(&c.standardize));
  f("loss.fd_squared", FieldRef(&c.fd_squared));
  f("loss.view_reduction", FieldRef(&c.view_reduction));
  f("loss.fisher_batches", FieldRef(&c.fisher_batches));
  f("optim.epochs_per_task", FieldRef(&c.epochs_per_task));
  f("optim.anneal_epochs", FieldRef(&c.anneal_epochs));
  f("optim.batch_size", FieldRef(&c.batch_size));
  f("optim.lr", FieldRef(&c.lr));
  f("optim.lr_floor", FieldRef(&c.lr_floor));
  f("optim.momentum", FieldRef(&c.momentum));
  f("optim.weight_decay", FieldRef(&c.weight_decay));
  f("optim.backbone_post_factor", FieldRef(&c.backbone_post_factor));
  f("optim.projector_post_factor", FieldRef(&c.projector_post_factor));
  f("seed.data", FieldRef(&c.data_seed));
  f("seed.init", FieldRef(&c.init_seed));
  f("seed.aug", FieldRef(&c.aug_seed));
  f("arch.input_dim", FieldRef(&c.arch.input_dim));
  f("arch.encoder_hidden", FieldRef(&c.arch.encoder_hidden));
  f("arch.feature_dim", FieldRef(&c.arch.feature_dim));
  f("arch.encoder_batchnorm", FieldRef(&c.arch.encoder_batchnorm));
  f("arch.projector_hidden", FieldRef(&c.arch.projector_hidden));
  f("arch.projector_dim", FieldRef(&c.arch.projector_dim));
  f("arch.temporal_hidden", FieldRef(&c.arch.temporal_hidden));
  f("arch.temporal_batchnorm", FieldRef(&c.arch.temporal_batchnorm));
  f("arch.predictor_hidden", FieldRef(&c.arch.predictor_hidden));
  f("data.source", FieldRef(&c.data.source));
  f("data.train_path", FieldRef(&c.data.train_path));
  f("data.test_path", FieldRef(&c.data.test_path));
  f("data.n_classes", FieldRef(&c.data.n_classes));
  f("data.dim", FieldRef(&c.data.dim));
  f("data.per_class", FieldRef(&c.data.per_class));
  f("data.test_per_class", FieldRef(&c.data.test_per_class));
  f("data.sigma", FieldRef(&c.data.sigma));
  f("data.modes_per_class", FieldRef(&c.data.modes_per_class));
  f("data.antipodal", FieldRef(&c.data.antipodal));
  f("data.n_tasks", FieldRef(&c.data.n_tasks));
  f("data.val_fraction", FieldRef(&c.data.val_fraction));
  f("data.shuffle_classes", FieldRef(&c.data.shuffle_classes));
  f("aug.noise_sigma", FieldRef(&c.augment.noise_sigma));
  f("aug.dropout", FieldRef(&c.augment.dropout));
  f("aug.scale_lo", FieldRef(&c.augment.scale_lo));
  f("aug.scale_hi", FieldRef(&c.augment.scale_hi));
  f("aug.image", FieldRef(&c.augment.image));
  f("eval.matrix", FieldRef(&c.eval.matrix));
  f("eval.future_data", FieldRef(&c.eval.future_data));
  f("eval.cka_samples", FieldRef(&c.eval.cka_samples));
  f("eval.downstream_shift", FieldRef(&c.eval.downstream_shift));
  f("probe.lr", FieldRef(&c.eval.probe.lr));
  f("probe.patience", FieldRef(&c.eval.probe.patience));
  f("probe.decay_factor", FieldRef(&c.eval.probe.decay_factor));
  f("probe.max_decays", FieldRef(&c.eval.probe.max_decays));
  f("probe.max_epochs", FieldRef(&c.eval.probe.max_epochs));
  f("probe.batch_size", FieldRef(&c.eval.probe.batch_size));
  f("probe.weight_decay", FieldRef(&c.eval.probe.weight_decay));
  f("probe.seed", FieldRef(&c.eval.probe.seed));
  f("probe.standardize", FieldRef(&c.eval.probe.standardize));
}

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

template <class N>
N parse_number(std::string_view text, std::string_view key) {
  N v{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc{} || res.ptr != end) {
    throw ConfigError("invalid numeric value '" + std::string(text) + "' for " + std::string(key));
  }
  return v;
}

inline std::string field_to_string(const FieldRef& ref) {
  return std::visit(
      [](auto* p) -> std::string {
        using V = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<V, std::string>) {
          return *p;
        } else if constexpr (std::is_same_v<V, double>) {
          return format_double(*p);
        } else if constexpr (std::is_same_v<V, bool>) {
          return *p ? "true" : "false";
        } else if constexpr (std::is_enum_v<V>) {
          return to_string(*p);
        } else if constexpr (std::is_same_v<V, std::vector<std::size_t>>) {
          std::string out;
          for (auto x : *p) out += (out.empty() ? "" : ",") + std::to_string(x);
          return out;
        } else {
          return std::to_string(*p);
        }
      },
      ref);
}

inline void field_from_string(const FieldRef& ref, std::string_view text, std::string_view key) {
  std::visit(
      [&](auto* p) {
        using V = std::remove_pointer_t<decltype(p)>;
        if constexpr (std::is_same_v<V, std::string>) {
          *p = std::string(text);
        } else if constexpr (std::is_same_v<V, double>) {
          *p = parse_number<double>(text, key);
        } else if constexpr (std::is_same_v<V, bool>) {
          if (text == "true" || text == "1") {
            *p = true;
          } else if (text == "false" || text == "0") {
            *p = false;
          } else {
            throw ConfigError("invalid value '" + std::string(text) + "' for " + std::string(key) +
                              " (accepted: true, false)");
          }
        } else if constexpr (std::is_enum_v<V>) {
          *p = parse_enum<V>(text, key);
        } else if constexpr (std::is_same_v<V, std::vector<std::size_t>>) {
          p->clear();
          std::size_t start = 0;
          while (start <= text.size() && !text.empty()) {
            const auto comma = text.find(',', start);
            const auto part = text.substr(start, comma == std::string_view::npos ? text.npos : comma - start);
            p->push_back(parse_number<std::size_t>(part, key));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
          }
        } else {
          *p = parse_number<V>(text, key);
        }
      },
      ref);
}

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

/// Ordered key=value pairs of every config field.
inline std::vector<std::pair<std::string, std::string>> to_pairs(const ExperimentConfig& cfg) {
  std::vector<std::pair<std::string, std::string>> out;
  auto copy = cfg;
  detail::visit_fields(copy, [&](const char* key, const detail::FieldRef& ref) {
    out.emplace_back(key, detail::field_to_string(ref));
  });
  return out;
}

inline std::string to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& [k, v] : to_pairs(cfg)) out += k + "=" + v + "\n";
  return out;
}

inline std::vector<std::string> config_keys() {
  std::vector<std::string> out;
  ExperimentConfig cfg;
  detail::visit_fields(cfg, [&](const char* key, const detail::FieldRef&) { out.emplace_back(key); });
  return out;
}

/// Sets one field from text. Unknown keys list the accepted ones.
inline void set_field(ExperimentConfig& cfg, std::string_view key, std::string_view value) {
  bool found = false;
  detail::visit_fields(cfg, [&](const char* k, const detail::FieldRef& ref) {
    if (key == k) {
      detail::field_from_string(ref, value, key);
      found = true;
    }
  });
  if (!found) {
    std::string keys;
    for (const auto& k : config_keys()) keys += (keys.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config key '" + std::string(key) + "' (accepted keys: " + keys + ")");
  }
}

/// Applies "key = value" lines on top of `base`. Blank lines and lines
/// starting with '#' are skipped.
inline ExperimentConfig parse_config(std::string_view text, ExperimentConfig base = {}) {
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    ++line_no;
    const auto line = detail::trim(raw);
    if (!line.empty() && line.front() != '#') {
      const auto eq = line.find('=');
      if (eq == std::string_view::npos) {
        throw ConfigError("line " + std::to_string(line_no) + ": expected key=value, got '" + std::string(line) + "'");
      }
      set_field(base, detail::trim(line.substr(0, eq)), detail::trim(line.substr(eq + 1)));
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  base.validate();
  return base;
}

inline void ExperimentConfig::validate() const {
  const auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  require(lambda_bt > 0.0, "loss.lambda_bt must be positive");
  require(lambda_fd >= 0.0 && lambda_pfr >= 0.0 && lambda_ewc >= 0.0, "regularization strengths must be >= 0");
  require(temperature > 0.0, "loss.temperature must be positive");
  require(fisher_batches > 0, "loss.fisher_batches must be positive");
  require(epochs_per_task > 0, "optim.epochs_per_task must be positive");
  require(anneal_epochs > 0 && anneal_epochs <= epochs_per_task, "optim.anneal_epochs must lie in [1, epochs_per_task]");
  require(batch_size >= 2, "optim.batch_size must be at least 2");
  require(lr > 0.0 && lr_floor > 0.0 && lr_floor <= lr, "optim.lr_floor must lie in (0, optim.lr]");
  require(momentum >= 0.0 && momentum < 1.0, "optim.momentum must lie in [0, 1)");
  require(weight_decay >= 0.0, "optim.weight_decay must be >= 0");
  require(backbone_post_factor > 0.0 && backbone_post_factor <= 1.0, "optim.backbone_post_factor must lie in (0, 1]");
  require(projector_post_factor > 0.0 && projector_post_factor <= 1.0,
          "optim.projector_post_factor must lie in (0, 1]");
  require(data.n_tasks > 0, "data.n_tasks must be positive");
  require(data.val_fraction >= 0.0 && data.val_fraction < 1.0, "data.val_fraction must lie in [0, 1)");
  require(augment.scale_lo > 0.0 && augment.scale_lo <= augment.scale_hi, "aug.scale_lo must lie in (0, aug.scale_hi]");
  require(augment.dropout >= 0.0 && augment.dropout <= 1.0, "aug.dropout must lie in [0, 1]");
  require(augment.noise_sigma >= 0.0, "aug.noise_sigma must be >= 0");
  require(eval.cka_samples >= 2, "eval.cka_samples must be at least 2");
  require(arch.feature_dim > 0 && arch.projector_dim > 0, "arch widths must be positive");
  if (data.source != DataSource::synthetic) require(!data.train_path.empty() && !data.test_path.empty(),
                                                     "file-backed data needs data.train_path and data.test_path");
}

}  // namespace pfr::train
