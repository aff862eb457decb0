#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace mir {

/// splitmix64 of `base ^ rotated stream tag`; derives decorrelated seeds for
/// independent runs (folds, repetitions, model init) from one root seed.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

/// mt19937_64 with hand-rolled output transforms. The standard pins the raw
/// engine sequence, so every draw here is reproducible across platforms;
/// std::*_distribution would not be.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  /// Uniform in [0, 1) with 53-bit resolution.
  double uniform();
  double uniform(double lo, double hi);

  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double normal();
  double normal(double mean, double stddev);

  /// Uniform index in [0, n). n must be positive.
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mir
