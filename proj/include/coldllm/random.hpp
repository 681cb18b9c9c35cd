#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace coldllm {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Independent stream for a named stage of a run.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) {
    std::uint64_t h = splitmix64(seed);
    for (unsigned char c : tag) h = splitmix64(h ^ c);
    return splitmix64(h ^ splitmix64(index));
}

template <class Int>
Int uniform_index(Rng& rng, Int n) {
    return std::uniform_int_distribution<Int>(0, n - 1)(rng);
}

}  // namespace coldllm
