// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

namespace pfr {

/// FNV-1a over raw bytes.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001b3ULL;
    }
  }
  template <class T>
  void update(std::span<const T> xs) {
    update(xs.data(), xs.size_bytes());
  }
  void update(const std::string& s) { update(s.data(), s.size()); }
  std::uint64_t digest() const noexcept { return h_; }

  std::string hex() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h_));
    return buf;
  }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_bytes(const std::vector<std::uint8_t>& bytes) {
  Fnv1a h;
  h.update(bytes.data(), bytes.size());
  return h.hex();
}

}  // namespace pfr
