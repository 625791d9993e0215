#include "evsurf/rng.hpp"

#include <cmath>

namespace evsurf {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::mt19937_64 make_rng(std::uint64_t seed, RngStream stream,
                         std::uint64_t index0, std::uint64_t index1) {
  std::uint64_t s = splitmix64(seed);
  s = splitmix64(s ^ static_cast<std::uint64_t>(stream));
  s = splitmix64(s ^ index0);
  s = splitmix64(s ^ index1);
  return std::mt19937_64(s);
}

double normal01(std::mt19937_64& g) {
  // Box-Muller; discard the second variate to keep the stream stateless.
  double u1 = uniform01(g);
  double u2 = uniform01(g);
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace evsurf
