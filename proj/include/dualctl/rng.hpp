#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace dualctl {

// Counter-based generator: every draw is a pure function of
// (master seed, path, step, lane), so paths can be generated in any order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : key_(mix(seed ^ 0x9E3779B97F4A7C15ULL)) {}

  std::uint64_t bits(std::uint64_t path, std::uint64_t step, std::uint64_t lane) const {
    std::uint64_t h = mix(key_ ^ (path * 0xD1B54A32D192ED03ULL));
    h = mix(h ^ (step * 0xAEF17502108EF2D9ULL));
    return mix(h ^ (lane * 0xF1357AEA2E62A9C5ULL + 0x632BE59BD9B4E019ULL));
  }

  // Uniform on the open interval (0, 1).
  double uniform(std::uint64_t path, std::uint64_t step, std::uint64_t lane) const {
    return (static_cast<double>(bits(path, step, lane) >> 11) + 0.5) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller on lanes (2*lane, 2*lane+1).
  double normal(std::uint64_t path, std::uint64_t step, std::uint64_t lane) const {
    const double u1 = uniform(path, step, 2 * lane);
    const double u2 = uniform(path, step, 2 * lane + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  // Poisson(mean) by inversion; intended for small per-step means.
  int poisson(double mean, std::uint64_t path, std::uint64_t step, std::uint64_t lane) const {
    if (mean <= 0.0) return 0;
    const double u = uniform(path, step, lane);
    double p = std::exp(-mean);
    double cdf = p;
    int k = 0;
    while (u > cdf && k < 10000) {
      ++k;
      p *= mean / k;
      cdf += p;
      if (p == 0.0) break;
    }
    return k;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
};

}  // namespace dualctl
