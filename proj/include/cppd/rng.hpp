#pragma once

#include <cmath>
#include <cstdint>

namespace cppd {

/// PCG32 generator (O'Neill). Small, fast, and reproducible across
/// platforms; each (seed, stream) pair yields an independent sequence,
/// which is what lets sample i of a dataset be regenerated in isolation.
class Pcg32 {
 public:
  Pcg32() : Pcg32(0x853c49e6748fea9bULL) {}
  explicit Pcg32(uint64_t seed, uint64_t stream = 0) { reseed(seed, stream); }

  void reseed(uint64_t seed, uint64_t stream) {
    state_ = 0u;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
    have_spare_ = false;
    spare_ = 0.0;
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((-rot) & 31u));
  }

  /// Unbiased integer in [0, n). n must be > 0.
  uint32_t next_below(uint32_t n) {
    uint32_t threshold = (-n) % n;
    for (;;) {
      uint32_t r = next_u32();
      if (r >= threshold) return r % n;
    }
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double next_double() {
    uint64_t hi = next_u32();
    uint64_t lo = next_u32();
    return static_cast<double>(((hi << 32) | lo) >> 11) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; caches the spare draw.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  /// N(mean, std^2) truncated to [mean - 2 std, mean + 2 std] by rejection.
  double trunc_normal(double mean, double std) {
    for (;;) {
      double z = normal();
      if (z >= -2.0 && z <= 2.0) return mean + std * z;
    }
  }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 1;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace cppd
