#pragma once

#include <cstdint>
#include <random>

namespace voxkit {

// splitmix64: used for seed derivation and order-independent per-voxel
// streams. Heavier std generators are seeded from this.
struct SplitMix64 {
    uint64_t state;

    explicit SplitMix64(uint64_t seed) : state(seed) {}

    uint64_t next() {
        uint64_t z = (state += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // unbiased-enough draw in [0, n); n > 0
    uint64_t below(uint64_t n) { return next() % n; }
};

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
    SplitMix64 s(a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2)));
    return s.next();
}

inline uint64_t mix_seed(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
    return mix_seed(mix_seed(mix_seed(a, b), c), d);
}

inline std::mt19937_64 make_engine(uint64_t seed, uint64_t stream) {
    return std::mt19937_64(mix_seed(seed, stream));
}

}  // namespace voxkit
