#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace vcfl {

// mt19937_64's output sequence is fixed by the standard; the distributions
// below are hand-rolled so that seeded runs are bit-identical across
// standard library implementations.
using Rng = std::mt19937_64;

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform on (0, 1].
inline double uniform01_open_low(Rng& rng) {
  return static_cast<double>((rng() >> 11) + 1) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline double exponential(Rng& rng) { return -std::log(uniform01_open_low(rng)); }

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

/// Unbiased integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<std::size_t>(x % bound);
}

/// Uniform point on the probability simplex of dimension n.
inline std::vector<double> uniform_simplex(Rng& rng, std::size_t n) {
  std::vector<double> out(n);
  double total = 0.0;
  for (auto& v : out) {
    v = exponential(rng);
    total += v;
  }
  for (auto& v : out) v /= total;
  return out;
}

template <class T>
void shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::swap(items[i - 1], items[uniform_index(rng, i)]);
  }
}

template <class T>
void shuffle(std::vector<T>& items, Rng& rng) {
  shuffle(std::span<T>(items), rng);
}

}  // namespace vcfl

namespace vcfl {

/// SplitMix64 finalizer; derives independent stream seeds from (base, a, b).
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ a) ^ b);
}

}  // namespace vcfl
