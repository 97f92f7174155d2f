#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace snmdp {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent stream for (master_seed, run_id); the same pair always yields the
// same stream regardless of scheduling order.
inline std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t run_id) {
  return splitmix64(splitmix64(master_seed) ^ splitmix64(run_id + 0x5851f42d4c957f2dULL));
}

inline Rng make_stream(std::uint64_t master_seed, std::uint64_t run_id) {
  return Rng(derive_seed(master_seed, run_id));
}

// FNV-1a, used for config hashes in report headers.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

}  // namespace snmdp
