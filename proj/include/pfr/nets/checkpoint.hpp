// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "pfr/nets/mlp.hpp"
#include "pfr/util/binary_io.hpp"

namespace pfr::nets {

/// One named array of a serialized model.
struct StateBlock {
  std::string name;
  Shape shape;
  std::vector<double> values;

  bool operator==(const StateBlock&) const = default;
};

using StateDict = std::vector<StateBlock>;

inline const StateBlock& find_block(const StateDict& state, const std::string& name) {
  auto it = std::find_if(state.begin(), state.end(), [&](const StateBlock& b) { return b.name == name; });
  if (it == state.end()) throw FormatError("checkpoint has no block named '" + name + "'", 0);
  return *it;
}

inline bool has_block(const StateDict& state, const std::string& name) {
  return std::any_of(state.begin(), state.end(), [&](const StateBlock& b) { return b.name == name; });
}

template <std::floating_point T>
void append_state(const Mlp<T>& net, const std::string& prefix, StateDict& out) {
  for (const auto& [name, t] : net.named_parameters(prefix)) {
    out.push_back({name, t.shape(), {t.values().begin(), t.values().end()}});
  }
  for (std::size_t l = 0; l < net.blocks().size(); ++l) {
    const auto& b = net.blocks()[l];
    if (!b.norm) continue;
    const std::string p = prefix + "." + std::to_string(l) + ".bn.";
    const auto& st = b.norm->stats;
    out.push_back({p + "running_mean", {1, st.running_mean.size()}, {st.running_mean.begin(), st.running_mean.end()}});
    out.push_back({p + "running_var", {1, st.running_var.size()}, {st.running_var.begin(), st.running_var.end()}});
  }
}

/// Overwrites the values of an already-shaped network.
template <std::floating_point T>
void load_state(Mlp<T>& net, const std::string& prefix, const StateDict& state) {
  for (auto& [name, t] : net.named_parameters(prefix)) {
    const auto& b = find_block(state, name);
    if (b.shape != t.shape()) {
      throw FormatError("block '" + name + "' has shape " + shape_str(b.shape) + ", model expects " +
                            shape_str(t.shape()),
                        0);
    }
    auto dst = t.mutable_values();
    std::transform(b.values.begin(), b.values.end(), dst.begin(), [](double v) { return static_cast<T>(v); });
  }
  for (std::size_t l = 0; l < net.blocks().size(); ++l) {
    auto& blk = net.blocks()[l];
    if (!blk.norm) continue;
    const std::string p = prefix + "." + std::to_string(l) + ".bn.";
    auto& st = blk.norm->stats;
    const auto& m = find_block(state, p + "running_mean");
    const auto& v = find_block(state, p + "running_var");
    if (m.values.size() != st.running_mean.size() || v.values.size() != st.running_var.size()) {
      throw FormatError("batchnorm statistics of '" + p + "' have the wrong width", 0);
    }
    std::transform(m.values.begin(), m.values.end(), st.running_mean.begin(), [](double x) { return static_cast<T>(x); });
    std::transform(v.values.begin(), v.values.end(), st.running_var.begin(), [](double x) { return static_cast<T>(x); });
  }
}

/// Checkpoint container, all integers little-endian:
///
///   magic "PFRCKPT1" | uint32 block count | blocks...
///   block: uint32 name length | name bytes | uint8 dtype (2 = float32,
///          3 = float64) | uint8 rank | uint16 zero | uint64 extents[rank] |
///          payload
enum class CheckpointDType : std::uint8_t { f32 = 2, f64 = 3 };

inline constexpr char kCheckpointMagic[] = "PFRCKPT1";

inline std::vector<std::uint8_t> encode_checkpoint(const StateDict& state, CheckpointDType dtype = CheckpointDType::f64) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic, 8);
  w.u32(static_cast<std::uint32_t>(state.size()));
  for (const auto& b : state) {
    w.str(b.name);
    w.u8(static_cast<std::uint8_t>(dtype));
    w.u8(static_cast<std::uint8_t>(b.shape.size()));
    w.u16(0);
    for (auto e : b.shape) w.u64(e);
    for (double v : b.values) {
      if (dtype == CheckpointDType::f32) {
        w.f32(static_cast<float>(v));
      } else {
        w.f64(v);
      }
    }
  }
  return w.take();
}

inline StateDict decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kCheckpointMagic, 8);
  const auto n = r.u32();
  StateDict state;
  state.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    StateBlock b;
    b.name = r.str();
    const std::size_t dtype_off = r.offset();
    const auto dtype = r.u8();
    if (dtype != 2 && dtype != 3) throw FormatError("unknown checkpoint dtype " + std::to_string(dtype), dtype_off);
    const auto rank = r.u8();
    r.u16();
    for (std::uint8_t k = 0; k < rank; ++k) b.shape.push_back(r.u64());
    b.values.resize(shape_numel(b.shape));
    for (auto& v : b.values) v = dtype == 2 ? static_cast<double>(r.f32()) : r.f64();
    state.push_back(std::move(b));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after last block", r.offset());
  return state;
}

inline void save_checkpoint(const std::string& path, const StateDict& state,
                            CheckpointDType dtype = CheckpointDType::f64) {
  io::write_all(path, encode_checkpoint(state, dtype));
}

inline StateDict load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_all(path)); }

}  // namespace pfr::nets
