#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace stealthlink {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t x) noexcept;

// Child seed for a named stream. Same (parent, tag, index) always yields the
// same child, distinct tags give unrelated streams.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view tag, std::uint64_t index = 0) noexcept;

// FNV-1a; stable across platforms.
std::uint64_t hash_string(std::string_view s) noexcept;

// Fisher-Yates shuffle driven only by Rng::operator(), so results do not depend
// on the standard library's distribution implementations.
template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::uint64_t j = rng() % i;
    std::swap(items[i - 1], items[j]);
  }
}

// Uniform integer in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

// Uniform real in [0, 1).
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

// Standard normal via Box-Muller on uniform01.
double standard_normal(Rng& rng);

}  // namespace stealthlink
