#pragma once

// Seedable, splittable random streams.
//
// Algorithm (stable across platforms and reimplementations):
//   * child seeds:  splitmix64(parent ^ splitmix64(tag + 0x51ed2701a3b5c9d7))
//   * raw bits:     std::mt19937_64 seeded with the 64-bit stream seed
//   * uniform01:    (bits >> 11) * 2^-53
//   * below(n):     rejection sampling, draw until bits < n * floor(2^64 / n)
// std::*_distribution is avoided because its output is implementation-defined.

#include <cstdint>
#include <random>
#include <vector>

namespace ramp3d {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
  return splitmix64(parent ^ splitmix64(tag + 0x51ed2701a3b5c9d7ULL));
}

template <typename... Tags>
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag,
                                    Tags... rest) {
  return derive_seed(derive_seed(parent, tag), static_cast<std::uint64_t>(rest)...);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }

  /// Independent child stream; does not advance this stream.
  Rng split(std::uint64_t tag) const { return Rng(derive_seed(seed_, tag)); }

  std::uint64_t bits() { return engine_(); }

  double uniform01() {
    return static_cast<double>(bits() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = (~std::uint64_t{0} / n) * n;
    std::uint64_t x = bits();
    while (x >= limit) x = bits();
    return x % n;
  }

  /// Uniform integer in [lo, hi].
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(
                    below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

  bool bernoulli(double p) { return uniform01() < p; }

  template <typename T>
  const T& pick(const std::vector<T>& items) {
    return items[below(items.size())];
  }

  /// Index drawn proportionally to non-negative weights.
  std::size_t weighted(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double u = uniform01() * total;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (u < weights[i]) return i;
      u -= weights[i];
    }
    return weights.empty() ? 0 : weights.size() - 1;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace ramp3d
