#ifndef SUNVO_RANDOM_HPP
#define SUNVO_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace sunvo {

// Mixes a base seed with a stream index so per-item streams are decorrelated
// and independent of evaluation order (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seeded scalar random stream. Deviates are derived from raw mt19937_64
/// words with explicit arithmetic (53-bit uniforms, Box-Muller normals,
/// rejection-sampled integers) rather than the std <random> distributions,
/// whose output sequences are implementation-defined; this keeps every
/// consumer reproducible bit-for-bit.
class RandomStream {
 public:
  explicit RandomStream(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  /// Independent stream keyed by (this stream's seed, index). Does not
  /// consume state from this stream.
  RandomStream substream(std::uint64_t index) const {
    return RandomStream(mix_seed(seed_, index));
  }

  std::uint64_t seed() const { return seed_; }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal deviate via Box-Muller.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Uniform integer in [0, n), n > 0. Rejection keeps the result unbiased.
  std::uint64_t uniform_index(std::uint64_t n) {
    const std::uint64_t rem = (UINT64_MAX % n + 1) % n;
    const std::uint64_t limit = UINT64_MAX - rem;
    std::uint64_t x = engine_();
    while (x > limit) x = engine_();
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace sunvo

#endif  // SUNVO_RANDOM_HPP
