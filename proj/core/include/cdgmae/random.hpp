#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace cdgmae {

/// SplitMix64 finalizer; used to derive independent streams from (seed, index).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// Seeded PRNG. Distribution transforms are written out here rather than
/// taken from <random> so that streams are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  double normal();
  /// Normal(0, stddev) resampled until within +-2 stddev.
  double truncated_normal(double stddev);
  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace cdgmae
