#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>
#include <string_view>
#include <vector>

#include "fd/error.hpp"

namespace fd {

// All randomness in the project flows through this generator so that
// golden values survive reimplementation in another language.
//
// Algorithm: SplitMix64 (Steele, Lea & Flood; the java.util.SplittableRandom
// mixer). State is a single 64-bit counter advanced by the golden-ratio
// increment; each output is the mixed counter:
//
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
//
// Derived quantities are pinned as follows:
//   uniform01()   -> (next() >> 11) * 2^-53, a double in [0, 1)
//   below(n)      -> unbiased modulo with rejection of the top partial range
//   gaussian()    -> Box-Muller, z = sqrt(-2 ln u1) * cos(2 pi u2) with
//                    u1 in (0, 1] taken as 1 - uniform01()
//   shuffle       -> Fisher-Yates from the back, j = below(i + 1)
class Prng {
 public:
  explicit Prng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Double in [0, 1), 53 random bits.
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Double in [-s, s].
  double uniform_sym(double s) { return s * (2.0 * uniform01() - 1.0); }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw BoundsError("Prng::below requires n >= 1");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t r;
    do {
      r = next();
    } while (r >= limit);
    return r % n;
  }

  // Standard normal via Box-Muller (cosine branch only; one draw pair
  // per sample keeps the stream position a pure function of call count).
  double gaussian() {
    const double u1 = 1.0 - uniform01();  // (0, 1]
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// FNV-1a 64-bit hash, used only for deriving named substreams.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Named substream derivation. Streams are stateless functions of
// (seed, tag), so the draw order of one consumer can never shift the
// stream seen by another. Tags are human-readable paths like
// "init/teacher/lower/l0/w_x" or "dropout/head/e3/s17".
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  return seed ^ fnv1a64(tag);
}

inline Prng substream(std::uint64_t seed, std::string_view tag) {
  return Prng(derive_seed(seed, tag));
}

}  // namespace fd
