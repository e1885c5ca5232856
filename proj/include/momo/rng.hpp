#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "momo/common.hpp"

namespace momo {

/// SplitMix64 mixer; used to derive independent stream seeds from a base
/// seed plus a path of indices, so that e.g. evaluation never perturbs the
/// training stream.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(base ^ 0x6d6f6d6f2d726e67ULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  s = splitmix64(s ^ c);
  return s;
}

/// Deterministic RNG. mt19937_64 output is pinned by the standard; the
/// distributions are implemented here rather than via <random> adapters,
/// whose output is implementation-defined.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t raw() { return gen_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(raw() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (no cached spare: one draw, two
  /// uniforms, so stream position is a pure function of draw count).
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  /// Uniform integer in [0, n); rejection sampling, unbiased.
  int uniform_int(int n) {
    require(n > 0, "Rng::uniform_int: n must be positive");
    const std::uint64_t un = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    std::uint64_t x;
    do {
      x = raw();
    } while (x >= limit);
    return static_cast<int>(x % un);
  }

private:
  std::mt19937_64 gen_;
};

}  // namespace momo
