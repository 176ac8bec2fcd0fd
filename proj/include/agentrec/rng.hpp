#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

#include "agentrec/text.hpp"

namespace agentrec {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed derivation: child = splitmix64(parent XOR fnv1a64(id)).
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::string_view id) {
  return splitmix64(parent ^ text::fnv1a64(id));
}

/// Seed derivation for numbered streams (sessions, Monte Carlo partitions).
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
  return splitmix64(parent ^ splitmix64(index + 1));
}

// Only the raw mt19937_64 output stream is standardized, so the real-valued
// conversions are done here rather than through <random> distributions. That
// keeps traces identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  void reseed(std::uint64_t seed) { engine_.seed(seed); }

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() {
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace agentrec
