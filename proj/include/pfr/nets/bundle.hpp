// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pfr/nets/checkpoint.hpp"
#include "pfr/nets/mlp.hpp"
#include "pfr/util/hash.hpp"

namespace pfr::nets {

/// Widths of the encoder and its heads.
struct ArchSpec {
  std::size_t input_dim = 16;
  std::vector<std::size_t> encoder_hidden{256, 256};
  std::size_t feature_dim = 128;
  bool encoder_batchnorm = false;
  std::size_t projector_hidden = 256;
  std::size_t projector_dim = 128;
  /// 0 makes the temporal projector a single linear map.
  std::size_t temporal_hidden = 256;
  bool temporal_batchnorm = true;
  /// 0 selects projector_dim / 2.
  std::size_t predictor_hidden = 0;

  MlpSpec encoder_spec() const {
    MlpSpec s{{input_dim}, encoder_batchnorm};
    s.widths.insert(s.widths.end(), encoder_hidden.begin(), encoder_hidden.end());
    s.widths.push_back(feature_dim);
    return s;
  }
  MlpSpec projector_spec() const { return {{feature_dim, projector_hidden, projector_dim}, true}; }
  MlpSpec temporal_spec() const {
    if (temporal_hidden == 0) return {{feature_dim, feature_dim}, false};
    return {{feature_dim, temporal_hidden, feature_dim}, temporal_batchnorm};
  }
  MlpSpec predictor_spec() const {
    const std::size_t h = predictor_hidden ? predictor_hidden : std::max<std::size_t>(1, projector_dim / 2);
    return {{projector_dim, h, projector_dim}, true};
  }
};

/// Frozen copy of an encoder. Its parameters never require gradients and
/// its forward pass runs in eval mode.
template <std::floating_point T>
class Snapshot {
 public:
  explicit Snapshot(const Mlp<T>& encoder) : net_(encoder.clone()) { net_.set_requires_grad(false); }

  BasicTensor<T> forward(const BasicTensor<T>& x) const { return net_.infer(x); }

  const Mlp<T>& network() const noexcept { return net_; }

  std::string hash() const {
    Fnv1a h;
    StateDict st;
    append_state(net_, "snapshot", st);
    for (const auto& b : st) h.update(std::span<const double>(b.values));
    return h.hex();
  }

 private:
  Mlp<T> net_;
};

/// Encoder f, view projector z, and the optional temporal projector m and
/// SimSiam predictor.
template <std::floating_point T>
struct ModelBundle {
  ArchSpec arch;
  std::uint64_t init_seed = 0;
  Mlp<T> encoder;
  Mlp<T> projector;
  std::optional<Mlp<T>> temporal;
  std::optional<Mlp<T>> predictor;

  static ModelBundle create(const ArchSpec& arch, std::uint64_t init_seed, bool with_predictor) {
    ModelBundle b;
    b.arch = arch;
    b.init_seed = init_seed;
    Rng enc_rng(derive_seed(init_seed, 1));
    b.encoder = Mlp<T>(arch.encoder_spec(), enc_rng);
    Rng proj_rng(derive_seed(init_seed, 2));
    b.projector = Mlp<T>(arch.projector_spec(), proj_rng);
    if (with_predictor) {
      Rng pred_rng(derive_seed(init_seed, 3));
      b.predictor.emplace(arch.predictor_spec(), pred_rng);
    }
    return b;
  }

  /// Fresh temporal projector for session `task`; its draw depends only on
  /// (init_seed, task).
  void reset_temporal(std::size_t task) {
    Rng rng(derive_seed(init_seed, 4, task));
    temporal.emplace(arch.temporal_spec(), rng);
  }

  std::vector<BasicTensor<T>> backbone_parameters() const { return encoder.parameters(); }

  /// View projector, predictor and temporal projector parameters.
  std::vector<BasicTensor<T>> head_parameters(bool include_temporal) const {
    auto out = projector.parameters();
    if (predictor) {
      auto p = predictor->parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
    if (include_temporal && temporal) {
      auto p = temporal->parameters();
      out.insert(out.end(), p.begin(), p.end());
    }
    return out;
  }

  /// Encoder, projector and predictor state; the temporal projector is
  /// session-local and not persisted.
  StateDict state_dict() const {
    StateDict st;
    append_state(encoder, "encoder", st);
    append_state(projector, "projector", st);
    if (predictor) append_state(*predictor, "predictor", st);
    return st;
  }

  void load_state_dict(const StateDict& st) {
    load_state(encoder, "encoder", st);
    load_state(projector, "projector", st);
    if (predictor) load_state(*predictor, "predictor", st);
  }
};

template <std::floating_point T>
BasicTensor<T> forward_encoder(ModelBundle<T>& model, const BasicTensor<T>& x, Mode mode = Mode::train) {
  return model.encoder.forward(x, mode);
}

template <std::floating_point T>
BasicTensor<T> forward_projector(ModelBundle<T>& model, const BasicTensor<T>& features, Mode mode = Mode::train) {
  if (features.rank() != 2 || features.cols() != model.arch.feature_dim) {
    throw DimensionError("projector expects [B x " + std::to_string(model.arch.feature_dim) + "] features, got " +
                         shape_str(features.shape()));
  }
  return model.projector.forward(features, mode);
}

template <std::floating_point T>
BasicTensor<T> forward_temporal(ModelBundle<T>& model, const BasicTensor<T>& features, Mode mode = Mode::train) {
  if (!model.temporal) throw ContractError("temporal projector has not been initialized for this session");
  if (features.rank() != 2 || features.cols() != model.arch.feature_dim) {
    throw DimensionError("temporal projector expects [B x " + std::to_string(model.arch.feature_dim) +
                         "] features, got " + shape_str(features.shape()));
  }
  return model.temporal->forward(features, mode);
}

template <std::floating_point T>
BasicTensor<T> forward_predictor(ModelBundle<T>& model, const BasicTensor<T>& z, Mode mode = Mode::train) {
  if (!model.predictor) throw ContractError("model has no predictor head");
  return model.predictor->forward(z, mode);
}

template <std::floating_point T>
Snapshot<T> take_snapshot(const ModelBundle<T>& model) {
  return Snapshot<T>(model.encoder);
}

template <std::floating_point T>
BasicTensor<T> forward_snapshot(const Snapshot<T>& snap, const BasicTensor<T>& x) {
  return snap.forward(x);
}

}  // namespace pfr::nets
