#pragma once

#include <cmath>
#include <cstdint>

#include "loraflow/iq.hpp"

namespace loraflow {

namespace detail {
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}
}  // namespace detail

/// Derive an independent seed from a base seed and a stream id. Used to key
/// every piece of randomness (trials, steps, samples) so results do not
/// depend on thread scheduling.
inline uint64_t derive_seed(uint64_t base, uint64_t stream) {
    uint64_t s = base ^ (0x9e3779b97f4a7c15ULL + (stream << 1));
    uint64_t a = detail::splitmix64(s);
    uint64_t b = detail::splitmix64(s);
    return a ^ (b >> 17);
}

inline uint64_t derive_seed(uint64_t base, uint64_t s1, uint64_t s2) {
    return derive_seed(derive_seed(base, s1), s2);
}

inline uint64_t derive_seed(uint64_t base, uint64_t s1, uint64_t s2, uint64_t s3) {
    return derive_seed(derive_seed(base, s1, s2), s3);
}

/// Small deterministic PRNG (splitmix64 core). Same seed gives the same
/// stream on every platform, which the stdlib distributions do not promise.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() { return detail::splitmix64(state_); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi], inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) {
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        return lo + static_cast<int64_t>(next_u64() % span);
    }

    /// Standard normal via Box-Muller (no spare caching).
    double gaussian() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Circularly-symmetric complex normal, unit variance per complex sample
    /// (real and imaginary parts each have variance 1/2).
    cplx cgaussian() {
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-std::log(u1));
        return cplx(r * std::cos(2.0 * M_PI * u2), r * std::sin(2.0 * M_PI * u2));
    }

    Rng child(uint64_t stream) const { return Rng(derive_seed(state_, stream)); }

private:
    uint64_t state_;
};

}  // namespace loraflow
