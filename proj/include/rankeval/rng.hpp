#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "core.hpp"

namespace rankeval {

// Sub-stream seed derivation: stream k of a base seed is the k-th output of
// splitmix64 started at the base. All randomness in the library flows from
// one 64-bit seed through this scheme.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t counter) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (counter + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic random source: a fully specified engine plus hand-rolled
// variate transforms, so a given seed reproduces the same stream everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }

  // uniform on [0, 1), 53-bit resolution
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  // uniform on (0, 1]
  double uniform_pos() {
    return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
  }

  // uniform over {0, ..., n-1} without modulo bias
  std::size_t index(std::size_t n) {
    if (n == 0) throw internal_error("Rng::index: n == 0");
    const std::uint64_t un = n;
    const std::uint64_t reject_below = (0 - un) % un;  // 2^64 mod n
    while (true) {
      const std::uint64_t v = engine_();
      if (v >= reject_below) return static_cast<std::size_t>(v % un);
    }
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * 3.141592653589793238462643383279502884 * u2;
    spare_ = radius * std::sin(angle);
    have_spare_ = true;
    return radius * std::cos(angle);
  }

  // Marsaglia-Tsang; shape < 1 handled with the standard boost.
  double gamma(double alpha) {
    if (!(alpha > 0.0)) throw input_error("Rng::gamma: alpha must be > 0");
    if (alpha < 1.0) {
      const double u = uniform_pos();
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    while (true) {
      double x = 0.0;
      double v = 0.0;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::vector<double> dirichlet(const std::vector<double>& alpha) {
    if (alpha.empty()) throw input_error("Rng::dirichlet: empty alpha");
    std::vector<double> draws(alpha.size());
    double total = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      draws[i] = gamma(alpha[i]);
      total += draws[i];
    }
    if (total <= 0.0) throw internal_error("Rng::dirichlet: degenerate draw");
    for (double& d : draws) d /= total;
    return draws;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace rankeval
