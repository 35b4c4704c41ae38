#pragma once

#include <cstdint>
#include <random>

namespace spcox {

// splitmix64; used to derive independent substreams from one manifest seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Deterministic substream seed: stream k of a base seed.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t s = base;
  std::uint64_t a = splitmix64(s);
  s = a ^ (stream * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL);
  return splitmix64(s);
}

inline std::mt19937_64 make_rng(std::uint64_t base, std::uint64_t stream) {
  return std::mt19937_64(derive_seed(base, stream));
}

}  // namespace spcox
