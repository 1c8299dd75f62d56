#pragma once

#include <cstdint>
#include <random>

namespace capsolve {

/// Seeded RNG with result distributions that do not depend on the standard
/// library's <random> distribution implementations, so equal seeds give
/// equal streams on every platform/toolchain.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform integer in [lo, hi], inclusive.
    int uniform_int(int lo, int hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
        return lo + static_cast<int>(bounded(span));
    }

    /// Uniform index in [0, n).
    std::size_t index(std::size_t n) { return static_cast<std::size_t>(bounded(n)); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

private:
    // Lemire multiply-shift bounded draw; bias below 2^-64 is irrelevant here.
    std::uint64_t bounded(std::uint64_t n) {
        const unsigned __int128 m = static_cast<unsigned __int128>(gen_()) * n;
        return static_cast<std::uint64_t>(m >> 64);
    }

    std::mt19937_64 gen_;
};

}  // namespace capsolve
