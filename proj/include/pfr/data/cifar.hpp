// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pfr/data/dataset.hpp"
#include "pfr/util/binary_io.hpp"

namespace pfr::data {

enum class CifarVariant { cifar10, cifar100 };

inline constexpr std::size_t kCifarPixels = 3 * 32 * 32;

constexpr std::size_t cifar_record_size(CifarVariant v) {
  return v == CifarVariant::cifar10 ? 1 + kCifarPixels : 2 + kCifarPixels;
}

/// Parses the binary distribution format: per record one label byte
/// (CIFAR-10) or coarse and fine label bytes (CIFAR-100), followed by the
/// R, G and B planes in row-major order. CIFAR-100 records use the fine label.
inline Dataset parse_cifar(const std::vector<std::uint8_t>& bytes, CifarVariant variant) {
  const std::size_t rec = cifar_record_size(variant);
  if (bytes.size() % rec != 0) {
    throw FormatError("truncated CIFAR file: " + std::to_string(bytes.size()) + " bytes is not a multiple of " +
                          std::to_string(rec),
                      bytes.size() - bytes.size() % rec);
  }
  const std::size_t n_classes = variant == CifarVariant::cifar10 ? 10 : 100;
  Dataset ds;
  ds.dim = kCifarPixels;
  ds.n_classes = n_classes;
  ds.samples.reserve(bytes.size() / rec);
  for (std::size_t off = 0; off < bytes.size(); off += rec) {
    const std::size_t label_off = variant == CifarVariant::cifar10 ? off : off + 1;
    if (variant == CifarVariant::cifar100 && bytes[off] >= 20) {
      throw FormatError("CIFAR-100 coarse label " + std::to_string(bytes[off]) + " out of range", off);
    }
    const std::uint8_t label = bytes[label_off];
    if (label >= n_classes) throw FormatError("label " + std::to_string(label) + " out of range", label_off);
    Sample s;
    s.label = label;
    s.source_index = off / rec;
    s.input.resize(kCifarPixels);
    const std::size_t px = off + (rec - kCifarPixels);
    for (std::size_t i = 0; i < kCifarPixels; ++i) s.input[i] = bytes[px + i] / 255.0;
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline Dataset load_cifar_binary(const std::string& path, CifarVariant variant) {
  return parse_cifar(io::read_all(path), variant);
}

/// Encodes one sample as a record. Pixels are quantized with round-to-nearest,
/// so inputs that came from a parsed file reproduce their bytes exactly.
inline std::vector<std::uint8_t> serialize_cifar_record(const Sample& s, CifarVariant variant, std::uint8_t coarse = 0) {
  if (s.input.size() != kCifarPixels) throw DimensionError("CIFAR records hold exactly 3072 pixels");
  std::vector<std::uint8_t> out;
  out.reserve(cifar_record_size(variant));
  if (variant == CifarVariant::cifar100) out.push_back(coarse);
  out.push_back(static_cast<std::uint8_t>(s.label));
  for (double v : s.input) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    out.push_back(static_cast<std::uint8_t>(q));
  }
  return out;
}

}  // namespace pfr::data
