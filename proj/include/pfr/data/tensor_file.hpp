// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "pfr/data/dataset.hpp"
#include "pfr/util/binary_io.hpp"

namespace pfr::data {

/// Generic labeled-tensor container, all integers little-endian:
///
///   offset  size      field
///   0       8         magic "PFRTNSR1"
///   8       1         dtype: 1 = uint8 (scaled by 1/255), 2 = float32, 3 = float64
///   9       1         rank r >= 1; extent 0 is the sample count
///   10      2         reserved, zero
///   12      4         class count
///   16      8*r       extents (uint64)
///   ...     4*N       labels (int32), N = extent 0
///   ...               N * prod(extents[1..]) values of dtype
enum class TensorDType : std::uint8_t { u8 = 1, f32 = 2, f64 = 3 };

inline constexpr char kTensorMagic[] = "PFRTNSR1";

inline Dataset parse_tensor_file(const std::vector<std::uint8_t>& bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kTensorMagic, 8);
  const std::size_t dtype_off = r.offset();
  const auto dtype = r.u8();
  if (dtype < 1 || dtype > 3) throw FormatError("unknown dtype code " + std::to_string(dtype), dtype_off);
  const std::size_t rank_off = r.offset();
  const auto rank = r.u8();
  if (rank < 1) throw FormatError("rank must be at least 1", rank_off);
  r.u16();
  Dataset ds;
  ds.n_classes = r.u32();
  std::vector<std::uint64_t> extents(rank);
  for (auto& e : extents) {
    const std::size_t off = r.offset();
    e = r.u64();
    if (e == 0) throw FormatError("zero extent", off);
  }
  const std::size_t n = extents[0];
  ds.dim = 1;
  for (std::size_t k = 1; k < rank; ++k) ds.dim *= extents[k];
  ds.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t off = r.offset();
    const auto label = r.i32();
    if (label < 0 || static_cast<std::size_t>(label) >= ds.n_classes) {
      throw FormatError("label " + std::to_string(label) + " out of range", off);
    }
    ds.samples[i].label = label;
    ds.samples[i].source_index = i;
  }
  for (auto& s : ds.samples) {
    s.input.resize(ds.dim);
    for (auto& v : s.input) {
      switch (static_cast<TensorDType>(dtype)) {
        case TensorDType::u8: v = r.u8() / 255.0; break;
        case TensorDType::f32: v = r.f32(); break;
        case TensorDType::f64: v = r.f64(); break;
      }
    }
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after payload", r.offset());
  return ds;
}

inline std::vector<std::uint8_t> serialize_tensor_file(const Dataset& ds, TensorDType dtype = TensorDType::f64) {
  io::ByteWriter w;
  w.bytes(kTensorMagic, 8);
  w.u8(static_cast<std::uint8_t>(dtype));
  w.u8(2);
  w.u16(0);
  w.u32(static_cast<std::uint32_t>(ds.n_classes));
  w.u64(ds.size());
  w.u64(ds.dim);
  for (const auto& s : ds.samples) w.i32(s.label);
  for (const auto& s : ds.samples) {
    for (double v : s.input) {
      switch (dtype) {
        case TensorDType::u8: w.u8(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))); break;
        case TensorDType::f32: w.f32(static_cast<float>(v)); break;
        case TensorDType::f64: w.f64(v); break;
      }
    }
  }
  return w.take();
}

inline Dataset load_tensor_file(const std::string& path) { return parse_tensor_file(io::read_all(path)); }

}  // namespace pfr::data
