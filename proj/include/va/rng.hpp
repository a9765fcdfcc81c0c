#pragma once

#include <cstdint>
#include <random>

namespace va {

using Rng = std::mt19937_64;

inline Rng make_rng(uint64_t seed) { return Rng(seed); }

// splitmix64 step; used to derive independent stream seeds from one root seed.
inline uint64_t mix_seed(uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline uint64_t derive_seed(uint64_t root, uint64_t a) { return mix_seed(root ^ mix_seed(a)); }

inline uint64_t derive_seed(uint64_t root, uint64_t a, uint64_t b) {
    return mix_seed(derive_seed(root, a) ^ mix_seed(b + 0x517cc1b727220a95ull));
}

inline uint64_t hash_string(const std::string& s) {
    // FNV-1a
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

template <typename T>
T uniform_real(Rng& rng, T lo, T hi) {
    std::uniform_real_distribution<T> d(lo, hi);
    return d(rng);
}

template <typename T>
T normal(Rng& rng, T mean, T stddev) {
    std::normal_distribution<T> d(mean, stddev);
    return d(rng);
}

}  // namespace va
