#pragma once

#include <cstdint>
#include <limits>

namespace riskssp {

/**
 * SplitMix64 (Steele, Lea, Flood 2014). Every simulation draw in the library
 * goes through this generator and the two mappings below, so a port only has
 * to reproduce these few lines to replay runs bit-exactly:
 *
 *   state += 0x9E3779B97F4A7C15
 *   z = state
 *   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
 *   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
 *   return z ^ (z >> 31)
 *
 *   uniform()      = (next() >> 11) * 2^-53
 *   below(n)       = rejection sampling on next() with limit 2^64 - (2^64 mod n)
 *
 * Reference sequence for seed 0 is pinned in tests/test_rng.cpp.
 */
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() { return next(); }

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = max() - (max() % n + 1) % n;  // largest multiple of n, minus 1
    std::uint64_t x;
    do {
      x = next();
    } while (x > limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t state_;
};

/// Seed of run `index` under `master`: output number index+1 of SplitMix64(master).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  SplitMix64 g(master + index * 0x9E3779B97F4A7C15ULL);
  return g.next();
}

}  // namespace riskssp
