#pragma once

#include <cstdint>
#include <random>

namespace shapecorr {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent sub-seed from a master seed. Stage k of the
/// pipeline uses stream k, so stages can be toggled without shifting the
/// random state of the others.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
  return splitmix64(master ^ splitmix64(stream + 1));
}

using Rng = std::mt19937_64;

}  // namespace shapecorr
