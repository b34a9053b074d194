#pragma once

#include <cstdint>
#include <random>

namespace iwiv {

/// Inverse of the standard normal CDF (Wichura's PPND16, |error| < 1e-15).
double normal_quantile(double p);

/// Derive an independent-looking seed for a named substream (splitmix64 step).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Deterministic RNG used everywhere in place of std:: distributions, whose
// output is implementation-defined. mt19937_64 plus the inverse-CDF normal
// gives bit-identical streams on any conforming platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform double in [0, 1), 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform double in (0, 1), safe as a quantile-function argument.
  double uniform01_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  /// Standard normal via inverse CDF.
  double normal() { return normal_quantile(uniform01_open()); }

  /// Integer in [0, n), n >= 1.
  int uniform_int(int n) {
    int v = static_cast<int>(uniform01() * n);
    return v < n ? v : n - 1;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace iwiv
