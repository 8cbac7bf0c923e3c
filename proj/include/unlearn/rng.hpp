#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace unlearn {

// All randomness in the library flows through the helpers below. The engine
// (std::mt19937_64) is fully specified by the standard, and the value
// transforms are written out explicitly because std::*_distribution is
// implementation-defined - we need seeded runs to reproduce bit-identically.

/// Uniform double in [0, 1) from one 64-bit draw (53 mantissa bits).
inline double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

/// Standard normal via Box-Muller, one value per call (no cached spare).
inline double gaussian(std::mt19937_64& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    while (u1 == 0.0) u1 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

/// Unbiased integer in [0, n) by rejection.
inline std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x = rng();
    while (x >= limit) x = rng();
    return x % n;
}

/// Fisher-Yates shuffle with a fixed draw sequence.
template <typename T>
void shuffle(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(bounded(rng, i));
        std::swap(v[i - 1], v[j]);
    }
}

/// SplitMix64 step; used to build counter-based per-sample streams.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stateless per-sample stream: values depend only on (seed, index, draw #),
/// never on the order samples are visited in.
class SampleStream {
public:
    SampleStream(std::uint64_t seed, std::uint64_t index) {
        state_ = seed ^ (index * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
        splitmix64(state_);  // decorrelate nearby indices
    }

    double next_uniform01() {
        return static_cast<double>(splitmix64(state_) >> 11) * 0x1.0p-53;
    }

private:
    std::uint64_t state_;
};

}  // namespace unlearn
