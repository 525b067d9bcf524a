#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <utility>
#include <vector>

namespace fusecal {

// Deterministic 64-bit generator (SplitMix64). The exact algorithm is part of
// the fixture contract: a seed recorded next to a data file must reproduce the
// identical stream on any platform, so nothing here may depend on std::
// distributions. Constants and derivations are documented in the README under
// "Random number generation".
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0,1) with 53-bit resolution.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    bool bernoulli(double p) { return next_double() < p; }

    // Standard normal via basic Box-Muller, two uniforms per draw, no caching.
    // u1 lies in (0,1] so the log stays finite.
    double normal() {
        const double u1 = 1.0 - next_double();
        const double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Uniform integer in [0, n). n must be positive. The modulo bias of at most
    // n / 2^64 is irrelevant for fixture generation and keeps the mapping
    // trivially portable.
    std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[below(i)]);
        }
    }

    // Independent child generator for stream k (e.g. one per image in a batch).
    Rng substream(std::uint64_t k) const {
        Rng r(state_ + (k + 1) * 0x9E3779B97F4A7C15ULL);
        return Rng(r.next_u64());
    }

private:
    std::uint64_t state_;
};

}  // namespace fusecal
