#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace lotlab {

/// Deterministic random source. The distributions are implemented here
/// rather than taken from <random> so that a seed reproduces the same
/// sequence regardless of the standard library in use.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Independent stream keyed by (base seed, purpose, index). Consumers that
  /// draw from different purposes never perturb each other.
  static Rng stream(std::uint64_t base_seed, std::string_view purpose,
                    std::uint64_t index = 0);

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t uniform_index(std::uint64_t n);

  /// Standard normal via Box-Muller.
  double normal();

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace lotlab
