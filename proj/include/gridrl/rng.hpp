#pragma once

#include <cmath>
#include <cstdint>

namespace gridrl {

// SplitMix64. Chosen as the project-wide generator because its output is a
// pure function of 64-bit integer arithmetic: identical sequences on every
// platform and compiler, which the reproducibility contract depends on.
class SplitMix64 {
public:
    explicit SplitMix64(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53 bits of precision.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0, bound) via the 128-bit multiply-shift reduction.
    // Consumes exactly one draw regardless of bound.
    uint64_t next_below(uint64_t bound) {
        return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * bound) >> 64);
    }

    // Uniform integer in [lo, hi) (hi exclusive).
    int next_int(int lo, int hi) {
        return lo + static_cast<int>(next_below(static_cast<uint64_t>(hi - lo)));
    }

    // Standard normal via Box-Muller. Consumes exactly two uniforms per call
    // so the stream advance rate is independent of the values drawn.
    double next_gaussian() {
        double u1 = 1.0 - next_double();  // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    uint64_t state() const { return state_; }

private:
    uint64_t state_;
};

// Derives the seed of an independent stream from (seed, tag). Each consumer
// in a run (layout generation, action sampling, latent noise, parameter
// init) owns a distinct tag so streams never interleave.
inline uint64_t derive_stream(uint64_t seed, uint64_t tag) {
    SplitMix64 g(seed ^ (0x9e3779b97f4a7c15ull * (tag + 1)));
    g.next_u64();
    return g.next_u64();
}

}  // namespace gridrl
