#pragma once

#include <algorithm>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace tdboot {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to turn (seed, stream id) pairs into
/// decorrelated generator seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return seed ^ mix64(stream);
}

// Stream ids for the independent consumers of a run seed.
inline constexpr std::uint64_t kSamplerStream = 0x5a3bULL;
inline constexpr std::uint64_t kWeightStream = 0xb0075ULL;
inline constexpr std::uint64_t kResampleStream = 0x0ff1ULL;

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

/// Draws an index from a cumulative distribution (last entry ~1).
inline std::size_t sample_from_cdf(std::span<const double> cdf, Rng& rng) {
  const double u = uniform01(rng) * cdf.back();
  auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  if (it == cdf.end()) --it;
  return static_cast<std::size_t>(it - cdf.begin());
}

/// Symmetric Dirichlet(1) draw of length n.
inline std::vector<double> dirichlet_ones(std::size_t n, Rng& rng) {
  std::exponential_distribution<double> expo(1.0);
  std::vector<double> w(n);
  double total = 0.0;
  for (double& x : w) {
    x = expo(rng);
    total += x;
  }
  for (double& x : w) x /= total;
  return w;
}

}  // namespace tdboot
