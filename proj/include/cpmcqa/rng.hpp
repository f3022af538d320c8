#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

// Deterministic randomness helpers. std::mt19937_64 output is pinned by the
// standard, but std::shuffle and std::uniform_*_distribution are not, so the
// draws below are spelled out by hand. Every byte an evaluation run emits must
// be reproducible from its seeds across platforms and thread counts.
namespace cpmcqa::rng {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const char c : data) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

// Derives an independent stream for a named entity (e.g. one question) from a
// run-level seed, so that sharing one seed across records does not correlate
// their draws.
constexpr std::uint64_t derive_stream(std::uint64_t seed, std::string_view key) {
  return splitmix64(seed ^ splitmix64(fnv1a64(key)));
}

// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

// Unbiased draw from {0, ..., bound-1} by rejection.
inline std::uint64_t below(std::mt19937_64& gen, std::uint64_t bound) {
  const std::uint64_t zone = bound * (UINT64_MAX / bound);
  std::uint64_t x = gen();
  while (x >= zone) x = gen();
  return x % bound;
}

// Fisher-Yates with the rejection sampler above; equidistributed and stable
// across standard libraries, unlike std::shuffle.
template <typename T>
void shuffle(std::vector<T>& values, std::mt19937_64& gen) {
  for (std::size_t i = values.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(below(gen, i));
    std::swap(values[i - 1], values[j]);
  }
}

}  // namespace cpmcqa::rng
