#pragma once

// Counter-based random numbers. Every draw is a pure function of a seed and a
// small tuple of counters (user index, item id, ...), so simulations give the
// same answers regardless of evaluation order or how work is sharded.

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace binclust::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash(std::uint64_t seed, std::uint64_t a,
                             std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ (b + 0x632BE59BD9B4E019ULL));
  h = splitmix64(h ^ (c + 0x85157AF5ULL));
  return h;
}

// Uniform double in [0, 1) with 53 random bits.
constexpr double uniform01(std::uint64_t seed, std::uint64_t a,
                           std::uint64_t b = 0, std::uint64_t c = 0) {
  return static_cast<double>(hash(seed, a, b, c) >> 11) * 0x1.0p-53;
}

__extension__ using uint128 = unsigned __int128;

// Uniform index in [0, n). n must be positive.
constexpr std::size_t uniform_index(std::size_t n, std::uint64_t seed,
                                    std::uint64_t a, std::uint64_t b = 0,
                                    std::uint64_t c = 0) {
  const auto x = static_cast<uint128>(hash(seed, a, b, c)) * n;
  return static_cast<std::size_t>(x >> 64);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char ch : s) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Child seed for a named stream, e.g. derive(instance_seed, "adaptive").
constexpr std::uint64_t derive(std::uint64_t seed, std::string_view stream,
                               std::uint64_t index = 0) {
  return hash(seed, fnv1a(stream), index, 0xD1B54A32D192ED03ULL);
}

}  // namespace binclust::rng
