#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace tda {

using RngSeed = std::uint64_t;

// Deterministic random stream. mt19937_64 output is specified bit-exactly by
// the standard; the derived draws below avoid std::*_distribution, whose
// results vary across standard libraries.
class RngStream {
 public:
  explicit RngStream(RngSeed seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // Unbiased integer in [0, n).
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t min = (0 - n) % n;  // 2^64 mod n
    std::uint64_t r = gen_();
    while (r < min) r = gen_();
    return r % n;
  }

  // Double in [0, 1) with 53 random bits.
  double uniform01() { return std::ldexp(static_cast<double>(gen_() >> 11), -53); }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    constexpr double kTwoPi = 6.283185307179586476925286766559;
    spare_ = radius * std::sin(kTwoPi * u2);
    have_spare_ = true;
    return radius * std::cos(kTwoPi * u2);
  }

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tda
