#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace advclust {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Deterministic uniform source. mt19937_64 is fully specified by the
/// standard; the double mapping below avoids std::uniform_real_distribution,
/// whose stream is implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  // [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // unbiased integer in [0, n); n >= 1
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t max = std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t limit = max - max % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

/// Counter-style seed derivation: independent streams keyed by a string id,
/// insensitive to execution order. Used by sweeps so that every
/// (cell, repetition) job owns an isolated, reproducible stream.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream_id) {
  return splitmix64(master ^ fnv1a64(stream_id));
}

}  // namespace advclust
