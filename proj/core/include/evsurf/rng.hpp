#pragma once

#include <cstdint>
#include <random>

namespace evsurf {

// Named sub-streams derived from the single run seed. Every consumer asks for
// (seed, stream, index) instead of sharing one generator, so results do not
// depend on evaluation order and any step can be reproduced in isolation.
enum class RngStream : std::uint64_t {
  kInit = 1,        // network weight initialisation
  kWindow = 2,      // training window endpoints
  kPixelBatch = 3,  // pixel batch sampling
  kRayJitter = 4,   // stratified / importance sampling along rays
  kEikonal = 5,     // eikonal point sampling
  kMetrics = 6,     // surface sampling for metrics
  kGeneric = 7,
};

std::uint64_t splitmix64(std::uint64_t x);

/// Deterministic generator for (seed, stream, index0, index1).
std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream,
                         std::uint64_t index0 = 0, std::uint64_t index1 = 0);

/// Uniform double in [0, 1).
inline double uniform01(std::mt19937_64& g) {
  // 53-bit mantissa construction; avoids distribution-object state.
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double uniform(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * uniform01(g);
}

/// Standard normal via Box-Muller (deterministic across platforms).
double normal01(std::mt19937_64& g);

}  // namespace evsurf
