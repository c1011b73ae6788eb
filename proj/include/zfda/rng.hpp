#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace zfda {

// SplitMix64 generator. One deterministic 64-bit generator is used for every
// random draw in the library so that a (config, seed) pair fully determines a
// run. Normal variates come from Box-Muller on two uniform draws.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller. Draws two uniforms per variate; the
    // sine branch is discarded to keep the stream layout simple.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Unbiased-enough bounded draw via 128-bit multiply (Lemire reduction
    // without rejection; bias < 2^-64 is irrelevant for shuffling).
    uint64_t next_below(uint64_t n) {
        return static_cast<uint64_t>(
            (static_cast<__uint128_t>(next_u64()) * static_cast<__uint128_t>(n)) >> 64);
    }

    // Fisher-Yates shuffle in place.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
};

}  // namespace zfda
