#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <limits>
#include <string>
#include <string_view>

namespace focus {

/// Byte offset into the persistent region.
using LogAddr = std::uint64_t;
inline constexpr LogAddr kNullAddr = std::numeric_limits<std::uint64_t>::max();

using FieldId = std::uint16_t;
using SchemaId = std::uint32_t;

inline constexpr std::size_t kCacheLineSize = 64;
inline constexpr std::size_t kNvmBlockSize = 256;

constexpr std::uint64_t align_down(std::uint64_t v, std::uint64_t a) { return v & ~(a - 1); }
constexpr std::uint64_t align_up(std::uint64_t v, std::uint64_t a) { return (v + a - 1) & ~(a - 1); }

static_assert(std::endian::native == std::endian::little, "little-endian host assumed");

// Little-endian fixed-width helpers over raw byte buffers.
template <typename T>
inline void store_le(void* dst, T v) {
  std::memcpy(dst, &v, sizeof(T));
}
template <typename T>
inline T load_le(const void* src) {
  T v;
  std::memcpy(&v, src, sizeof(T));
  return v;
}
template <typename T>
inline void append_le(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

}  // namespace focus
