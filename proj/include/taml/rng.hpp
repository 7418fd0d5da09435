#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace taml {

using Rng = std::mt19937_64;

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

/// Seed for a named sub-stream of a master seed, optionally indexed (by
/// iteration, task index, ...). Streams with different names or indices are
/// statistically independent, so changing one never perturbs another.
inline std::uint64_t stream_seed(std::uint64_t master, std::string_view name,
                                 std::initializer_list<std::uint64_t> indices = {}) {
  std::uint64_t h = detail::splitmix64(master ^ detail::fnv1a(name));
  for (std::uint64_t i : indices) h = detail::splitmix64(h ^ detail::splitmix64(i + 0x632be59bd9b4e019ULL));
  return h;
}

inline Rng make_stream(std::uint64_t master, std::string_view name, std::initializer_list<std::uint64_t> indices = {}) {
  return Rng(stream_seed(master, name, indices));
}

}  // namespace taml
