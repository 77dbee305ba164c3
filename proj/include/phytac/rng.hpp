#pragma once

#include <cmath>
#include <cstdint>

namespace phytac {

// Counter-based deterministic generator. The i-th raw draw (i starting at 1)
// is fully determined by (seed, i):
//
//   x_i = mix64(seed + i * 0x9E3779B97F4A7C15)
//   mix64(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//             z ^= z >> 27; z *= 0x94D049BB133111EB;
//             z ^= z >> 31; return z;
//
// which is the SplitMix64 stream seeded at `seed`. Any language with 64-bit
// unsigned integers reproduces the stream bit-exactly.
//
// Derived draws are defined on top of the raw stream:
//   uniform()  = (x >> 11) * 2^-53            in [0, 1)
//   normal()   pairs two raw draws through the trigonometric Box-Muller
//              transform; the second value of a pair is cached and returned
//              by the next call, so normals consume exactly one raw draw each
//              on average and the stream stays reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64() {
    counter_ += 1;
    return mix64(seed_ + counter_ * 0x9E3779B97F4A7C15ULL);
  }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Modulo bias is below 2^-53 for the n used here (n << 2^32).
    return next_u64() % n;
  }

  // Standard normal draw (Box-Muller, trigonometric form).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] so log(u1) is finite.
    const double u1 =
        (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  // Independent child stream; the derivation is part of the documented
  // algorithm: child_seed = mix64(mix64(seed) ^ mix64(salt + 1)).
  Rng derive(std::uint64_t salt) const {
    return Rng(mix64(mix64(seed_) ^ mix64(salt + 1)));
  }

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

}  // namespace phytac
