#include "tcrl/rng.hpp"

#include "tcrl/core.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace tcrl {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::child(std::uint64_t stream_id) const {
    return Rng(splitmix64(seed_ ^ splitmix64(stream_id + 0x632be59bd9b4e019ULL)));
}

double Rng::uniform01() {
    // (k + 0.5) / 2^53 never hits 0 or 1.
    const std::uint64_t k = engine_() >> 11;
    return (static_cast<double>(k) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t Rng::below(std::uint64_t n) {
    require(n > 0, "below() needs a positive bound");
    // Rejection keeps the draw unbiased.
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double laplace_from_uniform(double u, double scale) {
    const double c = u - 0.5;
    if (c == 0.0) return 0.0;
    const double s = c < 0.0 ? -1.0 : 1.0;
    return -scale * s * std::log1p(-2.0 * std::abs(c));
}

double laplace_sample(Rng& rng, double scale) {
    require(std::isfinite(scale) && scale > 0.0, "laplace scale must be positive");
    return laplace_from_uniform(rng.uniform01(), scale);
}

}  // namespace tcrl
