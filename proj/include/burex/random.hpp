#pragma once

// Seeded randomness. Only the engine's raw output is used, so sequences are identical
// across standard library implementations.

#include <cstddef>
#include <cstdint>
#include <random>

namespace burex {

inline std::uint64_t splitmix64(std::uint64_t x) noexcept
{
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Independent stream for item `index` under `seed`; independent of worker count.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t index)
{
  return std::mt19937_64(splitmix64(splitmix64(seed) ^ splitmix64(index + 0x5851F42D4C957F2DULL)));
}

inline double uniform01(std::mt19937_64& rng) noexcept
{
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) noexcept
{
  return static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
}

}  // namespace burex
