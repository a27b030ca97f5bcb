// patchstitch - header-only point cloud normal estimation via patch stitching
// SPDX-License-Identifier: MIT
//
// Seed derivation and portable sampling helpers.
//
// Every stochastic stage draws from std::mt19937_64 seeded with
// derive_seed(run_seed, "<stage>"). The standard <random> distributions are
// implementation-defined, so the conversions below are written out to keep
// results identical across standard libraries.

#ifndef PATCHSTITCH_RANDOM_HPP
#define PATCHSTITCH_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>

namespace patchstitch {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Sub-seed for a named stage of a run.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  return splitmix64(seed ^ fnv1a(stage));
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage, std::uint64_t index) {
  return splitmix64(derive_seed(seed, stage) + splitmix64(index));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

/// Uniform integer in [0, n). Modulo bias is below 2^-40 for n < 2^24.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) { return rng() % n; }

/// Standard normal via Box-Muller (one value per call).
inline double normal01(Rng& rng) {
  double u1 = uniform01(rng);
  while (u1 <= 0.0) u1 = uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace patchstitch

#endif  // PATCHSTITCH_RANDOM_HPP
