// Seed splitting for reproducible parallel Monte Carlo.
//
// Every replication, trial or path gets its own std::mt19937_64 seeded with
// derive_seed(master, index). The derived seed is the splitmix64 output of
// master + (index + 1) * golden gamma, so streams do not depend on thread
// count or scheduling.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace kmono {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master + (index + 1) * 0x9e3779b97f4a7c15ULL);
}

/// Two-level split, e.g. (experiment seed, n level, replication).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return derive_seed(derive_seed(master, a), b);
}

using Rng = std::mt19937_64;

/// Uniform (0,1) draws, never exactly 0.
inline double uniform_open(Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double v;
  do v = u(rng);
  while (v <= 0.0);
  return v;
}

/// Dirichlet(alpha, ..., alpha) of dimension m.
inline std::vector<double> dirichlet(Rng& rng, std::size_t m, double alpha) {
  std::gamma_distribution<double> g(alpha, 1.0);
  std::vector<double> out(m);
  double s = 0.0;
  for (auto& v : out) {
    v = g(rng);
    s += v;
  }
  for (auto& v : out) v /= s;
  return out;
}

}  // namespace kmono
