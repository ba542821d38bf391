#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace orthoate {

/// SplitMix64 finalizer. Used to derive independent stream seeds from a
/// master seed and a tuple of counters.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the stream addressed by (master, c0, c1, ...). The mapping is a
/// pure function of its arguments, so any scheduling of work that derives
/// its generators this way reproduces the serial result.
inline std::uint64_t stream_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> counters) {
  std::uint64_t h = mix64(master);
  for (std::uint64_t c : counters) h = mix64(h ^ mix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t master,
                       std::initializer_list<std::uint64_t> counters) {
  return Rng(stream_seed(master, counters));
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

/// Unbiased integer in [0, n) by rejection; n must be > 0.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace orthoate
