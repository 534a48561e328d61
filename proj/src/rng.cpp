#include "fedsim/rng.hpp"

#include <cmath>

#include "fedsim/errors.hpp"

namespace fedsim {

std::uint64_t Rng::bounded(std::uint64_t n) {
    // Rejection sampling over the top of the range to avoid modulo bias.
    const std::uint64_t threshold = -n % n;
    for (;;) {
        std::uint64_t r = engine_();
        if (r >= threshold) return r % n;
    }
}

double Rng::normal() {
    // 1 - u keeps the argument of log strictly positive.
    double u1 = 1.0 - next_double();
    double u2 = next_double();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
}

double Rng::gamma(double shape) {
    if (!(shape > 0.0)) throw ConfigError("gamma shape must be positive");
    if (shape < 1.0) {
        // Boost: Gamma(a) = Gamma(a+1) * U^(1/a).
        double u = next_double();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x = normal();
        double t = 1.0 + c * x;
        if (t <= 0.0) continue;
        double v = t * t * t;
        double u = next_double();
        double x2 = x * x;
        if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
        if (u > 0.0 && std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer applied over the concatenated words.
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ a) ^ b);
}

}  // namespace fedsim
