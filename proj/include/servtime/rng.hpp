#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "servtime/types.hpp"

namespace servtime {

// Deterministic RNG wrapper. All distributions are implemented on top of the
// raw engine so that sequences are reproducible across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1).
  Scalar uniform() {
    return (engine_() >> 11) * 0x1.0p-53;
  }

  Scalar uniform(Scalar lo, Scalar hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller, no caching: two engine draws per variate.
  Scalar normal() {
    Scalar u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const Scalar u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  Vec normal_vec(int n) {
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = normal();
    return v;
  }

  Scalar exponential(Scalar rate) {
    return -std::log(1.0 - uniform()) / rate;
  }

  // Index in [0, n) with equal probability.
  int index(int n) {
    return static_cast<int>(engine_() % static_cast<std::uint64_t>(n));
  }

  std::uint64_t raw() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace servtime
