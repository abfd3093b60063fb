#pragma once

#include <cstdint>
#include <random>

namespace priorband {

using Rng = std::mt19937_64;

// Named sub-streams derived from one user-facing seed. Keeps the run
// simulation, prior construction and per-seed prior perturbation on
// independent random sequences.
enum class RngStream : std::uint64_t {
  Simulation = 0,
  PriorBase = 1,
  PriorPerturb = 2,
  Probe = 3,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(seed ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

inline Rng make_rng(std::uint64_t seed, RngStream stream = RngStream::Simulation) {
  return Rng(mix_seed(seed, static_cast<std::uint64_t>(stream)));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal(Rng& rng, double mean, double stddev) {
  return std::normal_distribution<double>(mean, stddev)(rng);
}

}  // namespace priorband
