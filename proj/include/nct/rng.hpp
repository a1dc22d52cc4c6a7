#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <random>

namespace nct {

// 64-bit finalizer (splitmix64) used to derive independent seeds from a
// master seed plus a stream of tags.  The same master seed and tag sequence
// always yields the same derived seed, on any platform.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Named sub-streams of the master seed.  Deriving every random stream from
// (seed, tags...) decouples results from evaluation order and thread count.
enum class Stream : std::uint64_t {
  kNetwork = 1,
  kCovariates = 2,
  kAssignment = 3,
  kOutcomes = 4,
  kSplit = 5,
  kReplication = 6,
  kMonteCarlo = 7,
};

inline std::uint64_t derive(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(seed ^ 0x6a09e667f3bcc909ULL);
  for (std::uint64_t t : tags) h = mix64(h ^ t);
  return h;
}

inline std::uint64_t derive(std::uint64_t seed, Stream s) {
  return derive(seed, {static_cast<std::uint64_t>(s)});
}

inline std::uint64_t derive(std::uint64_t seed, Stream s, std::uint64_t a) {
  return derive(seed, {static_cast<std::uint64_t>(s), a});
}

inline std::uint64_t derive(std::uint64_t seed, Stream s, std::uint64_t a, std::uint64_t b) {
  return derive(seed, {static_cast<std::uint64_t>(s), a, b});
}

// Deterministic random engine: std::mt19937_64 (whose output sequence is
// fixed by the standard) plus hand-rolled distributions, because the
// standard library's distribution objects are implementation-defined and
// would break cross-platform reproducibility.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [0, n), n >= 1.  Unbiased via rejection sampling.
  std::uint64_t below(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v = engine_();
    while (v >= limit) v = engine_();
    return v % n;
  }

  // Standard normal via Box-Muller, one value per call (no cached spare, so
  // the draw count per call is fixed and parallel derivations stay aligned).
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return r * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace nct
