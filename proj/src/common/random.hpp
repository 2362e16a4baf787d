// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The ResMLP-Desk Authors

#pragma once

#include <cstdint>
#include <random>

namespace resmlp {

// Seeded generator used for every stochastic choice in the library, so a seed
// fully determines initialisation, shuffling and augmentation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Normal(0, std) resampled until it falls inside +-2 std.
  double trunc_normal(double std) {
    std::normal_distribution<double> dist(0.0, std);
    for (;;) {
      const double v = dist(engine_);
      if (v >= -2.0 * std && v <= 2.0 * std) return v;
    }
  }

  double normal(double mean = 0.0, double std = 1.0) {
    return std::normal_distribution<double>(mean, std)(engine_);
  }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }

  // Uniform integer in [lo, hi].
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// Derives an independent stream seed from a base seed and a tag (splitmix64).
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace resmlp
