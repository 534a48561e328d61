#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace fedsim {

// Deterministic random source. The engine is std::mt19937_64 (bit-exact per
// the standard); the distribution transforms are fixed here because the
// std::*_distribution algorithms are implementation-defined and would break
// cross-toolchain reproducibility.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1), 53-bit resolution.
    double next_double() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Unbiased integer in [0, n); n must be nonzero.
    std::uint64_t bounded(std::uint64_t n);

    // Standard normal via Box-Muller.
    double normal();

    // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0.
    double gamma(double shape);

    // Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[static_cast<std::size_t>(bounded(i))]);
        }
    }

private:
    std::mt19937_64 engine_;
};

// Derives an independent stream id from (seed, a, b), e.g. per (client, round).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0);

}  // namespace fedsim
