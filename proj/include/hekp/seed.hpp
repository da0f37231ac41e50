#pragma once

#include <cstdint>
#include <string_view>

namespace hekp {

// SplitMix64 finaliser.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Expands the single user-facing seed into independent per-purpose streams.
constexpr std::uint64_t sub_seed(std::uint64_t seed, std::string_view tag) {
  return mix64(seed ^ mix64(fnv1a(tag)));
}

constexpr std::uint64_t sub_seed(std::uint64_t seed, std::string_view tag, std::uint64_t a,
                                 std::uint64_t b = 0) {
  return mix64(sub_seed(seed, tag) ^ mix64(a * 0x9e3779b97f4a7c15ULL + b));
}

}  // namespace hekp
