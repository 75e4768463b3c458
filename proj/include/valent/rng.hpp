#pragma once

#include <cstdint>

namespace valent {

// splitmix64: the deterministic generator behind weight init and probe
// sampling. Archives record the algorithm id "splitmix64-uniform-v1" so
// golden files stay portable.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53 bits of entropy.
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * (1.0 / 9007199254740992.0);
    }

    // Uniform in [-scale, scale).
    float next_symmetric(double scale) {
        return static_cast<float>((next_double() * 2.0 - 1.0) * scale);
    }

    // Uniform integer in [lo, hi] inclusive, via rejection sampling.
    uint64_t next_range(uint64_t lo, uint64_t hi) {
        uint64_t span = hi - lo + 1;
        uint64_t limit = UINT64_MAX - UINT64_MAX % span;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return lo + v % span;
    }

private:
    uint64_t state_;
};

inline constexpr const char* kRngAlgorithmId = "splitmix64-uniform-v1";

} // namespace valent
