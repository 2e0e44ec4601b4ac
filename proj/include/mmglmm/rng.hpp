#pragma once

#include <cstdint>
#include <random>

namespace mmglmm {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of chain `chain` (0-based) derived from the master seed.
inline std::uint64_t chain_seed(std::uint64_t master, std::size_t chain) {
  return splitmix64(master + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(chain) + 1));
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline double uniform01(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return u(rng);
}

}  // namespace mmglmm
