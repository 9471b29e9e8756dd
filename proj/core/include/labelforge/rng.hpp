#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace labelforge {

// Fisher-Yates over std::mt19937_64, whose output sequence is fixed by the
// standard. Unlike std::shuffle the permutation is identical across standard
// library implementations.
template <class T>
void deterministic_shuffle(std::span<T> items, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(rng() % i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

// 64-bit mix of two values (splitmix64 finalizer over a combined word).
constexpr std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace labelforge
