#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace teo {

// Deterministic RNG derivation. Every record draws from a stream that is a
// pure function of (global seed, record id), so pipeline output does not
// depend on worker scheduling or iteration order.

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::mt19937_64 record_rng(uint64_t global_seed, std::string_view record_id,
                                  uint64_t stream = 0) {
    uint64_t state = global_seed ^ (fnv1a64(record_id) + 0x632be59bd9b4e019ULL * (stream + 1));
    uint64_t a = splitmix64(state);
    uint64_t b = splitmix64(state);
    std::seed_seq seq{static_cast<uint32_t>(a), static_cast<uint32_t>(a >> 32),
                      static_cast<uint32_t>(b), static_cast<uint32_t>(b >> 32)};
    return std::mt19937_64(seq);
}

// Bounded draws implemented locally so output bytes do not depend on the
// standard library's distribution internals.
inline uint64_t uniform_u64(std::mt19937_64& rng, uint64_t n) {
    // n == 0 means the full 64-bit range
    if (n == 0) return rng();
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v = rng();
    while (v >= limit) v = rng();
    return v % n;
}

inline int uniform_int(std::mt19937_64& rng, int lo, int hi) {  // inclusive
    return lo + static_cast<int>(uniform_u64(rng, static_cast<uint64_t>(hi - lo + 1)));
}

inline double uniform_real(std::mt19937_64& rng) {  // [0, 1)
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline bool bernoulli(std::mt19937_64& rng, double p) {
    return uniform_real(rng) < p;
}

}  // namespace teo
