// Licensed under the Apache License 2.0 (see LICENSE file).

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tsync {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent child seeds from (parent, tag).
constexpr std::uint64_t mix_seed(std::uint64_t parent, std::uint64_t tag) {
  std::uint64_t z = parent + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform integer in [lo, hi]. Avoids std::uniform_int_distribution so label
// sampling stays identical across standard library implementations.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t lo, std::uint64_t hi) {
  const std::uint64_t span = hi - lo + 1;
  if (span == 0) return rng();
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return lo + v % span;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

// Box-Muller, one draw per call.
inline double gaussian(Rng& rng) {
  double u1;
  do {
    u1 = uniform_real(rng, 0.0, 1.0);
  } while (u1 <= 0.0);
  const double u2 = uniform_real(rng, 0.0, 1.0);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace tsync
