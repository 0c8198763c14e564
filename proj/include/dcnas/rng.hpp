#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace dcnas {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Named random streams. Each consumer of the experiment seed gets its own
// stream so that adding a consumer never perturbs the draws of another.
enum class Stream : std::uint64_t {
  kSampler = 1,
  kPartition = 2,
  kInit = 3,
  kData = 4,
  kClient = 5,
  kSparsity = 6,
  kSplit = 7,
  kFinetune = 8,
};

// Counter-based derivation: (seed, stream, counters...) -> 64-bit seed.
inline std::uint64_t derive_seed(std::uint64_t seed, Stream stream,
                                 std::initializer_list<std::uint64_t> counters = {}) {
  std::uint64_t h = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream)));
  for (std::uint64_t c : counters) h = splitmix64(h ^ splitmix64(c + 0x632BE59BD9B4E019ULL));
  return h;
}

inline Rng make_rng(std::uint64_t seed, Stream stream,
                    std::initializer_list<std::uint64_t> counters = {}) {
  return Rng(derive_seed(seed, stream, counters));
}

inline bool fair_bit(Rng& rng) { return (rng() >> 63) != 0; }

// Uniform integer in [0, bound) by rejection; identical on every platform.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace dcnas
