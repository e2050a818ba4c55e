#pragma once

#include <cmath>
#include <cstdint>
#include <random>

// Deterministic random streams.  Engines are std::mt19937_64 (whose output
// sequence is fixed by the standard); the uniform/gaussian/bounded-int
// transforms are hand-rolled because the std::*_distribution classes are
// implementation-defined and would break byte-identical reruns.
//
// Independent sub-streams are derived by hashing (root seed, stream indices),
// so a run partitioned into chunks produces the same outcomes no matter how
// the chunks are scheduled across threads.

namespace pulsecorr::rng {

// splitmix64 finalizer: full-avalanche 64-bit mix.
inline std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ull;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebull;
  z ^= z >> 31;
  return z;
}

// Hash a (seed, a, b, c) tuple into a sub-stream seed.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(root + 0x9e3779b97f4a7c15ull);
  h = mix64(h ^ (a + 0xd1b54a32d192ed03ull));
  h = mix64(h ^ (b + 0x8cb92ba72f3d8dd7ull));
  h = mix64(h ^ (c + 0x2545f4914f6cdd1dull));
  return h;
}

class Stream {
 public:
  explicit Stream(std::uint64_t seed) : eng_(seed) {}

  // Uniform double in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Standard normal via the Marsaglia polar method (second value cached).
  double gaussian() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    cached_ = v * f;
    have_cached_ = true;
    return u * f;
  }

  // Integer in [0, n) via multiply-shift reduction (bias ~ n/2^64, negligible
  // for the bound sizes used here).
  std::uint64_t below(std::uint64_t n) {
    const unsigned __int128 m = static_cast<unsigned __int128>(eng_()) * n;
    return static_cast<std::uint64_t>(m >> 64);
  }

  std::uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
  bool have_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace pulsecorr::rng
