#pragma once

#include <cmath>
#include <cstdint>

namespace slsdf {

// Counter-based RNG: every draw is a pure function of a 64-bit key, so
// results do not depend on evaluation order or worker scheduling.

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline uint64_t rng_key(uint64_t seed, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
  uint64_t k = splitmix64(seed ^ 0x5851f42d4c957f2dULL);
  k = splitmix64(k ^ a);
  k = splitmix64(k ^ b);
  k = splitmix64(k ^ c);
  return k;
}

/// Uniform draw in [0,1) with 53 random mantissa bits.
inline double rng_uniform(uint64_t key) {
  return static_cast<double>(splitmix64(key) >> 11) * 0x1.0p-53;
}

/// Standard normal via Box-Muller on two decorrelated uniform streams.
inline double rng_gaussian(uint64_t key) {
  double u1 = rng_uniform(splitmix64(key ^ 0xa0761d6478bd642fULL));
  double u2 = rng_uniform(splitmix64(key ^ 0xe7037ed1a0b428dbULL));
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  constexpr double two_pi = 6.283185307179586476925286766559;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

}  // namespace slsdf
