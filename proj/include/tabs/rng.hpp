#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace tabs {

// Seedable 64-bit generator. The engine is std::mt19937_64 (output fixed by
// the standard); the conversions below are written out so that streams are
// bit-identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : Rng(seed, 0) {}

    // Independent stream for replica `index` of a run seeded with `seed`.
    Rng(std::uint64_t seed, std::uint64_t index) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(index),
                          static_cast<std::uint32_t>(index >> 32), 0x7ab5u};
        engine_.seed(seq);
    }

    std::uint64_t next() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    // Exp(rate) variate, rate > 0.
    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    // Uniform integer in [0, n), n > 0 (Lemire's multiply-shift with rejection).
    std::uint64_t below(std::uint64_t n) {
        unsigned __int128 m = static_cast<unsigned __int128>(next()) * n;
        auto low = static_cast<std::uint64_t>(m);
        if (low < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (low < threshold) {
                m = static_cast<unsigned __int128>(next()) * n;
                low = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace tabs
