#pragma once

#include <cstdint>
#include <random>

namespace levitate {

inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Seed of trajectory `index` under `master_seed`:
///   splitmix64(master_seed ^ splitmix64(index)).
/// Streams are std::mt19937_64 seeded with this value.
inline std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t index) {
  return splitmix64(master_seed ^ splitmix64(index));
}

using RandomStream = std::mt19937_64;

} // namespace levitate
