#pragma once

#include <cstdint>
#include <random>

namespace tcrl {

/// Deterministic random stream.
///
/// Generator family: std::mt19937_64 (bit-exact across standard libraries)
/// seeded through SplitMix64. Real-valued draws are derived from raw 64-bit
/// outputs by fixed formulas rather than std distributions, whose algorithms
/// are implementation-defined.
///
/// Stream splitting: `child(id)` derives an independent stream whose seed is
/// SplitMix64(seed ^ SplitMix64(id + golden)). Callers use one child per
/// sequence and one per parameter tensor, so draws never depend on how many
/// values another consumer took.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }
    Rng child(std::uint64_t stream_id) const;

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on the open interval (0, 1); 53 bits of resolution.
    double uniform01();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
    /// Standard normal via Box-Muller (one draw consumes two uniforms).
    double normal();
    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

/// Laplace(0, scale) by inverse CDF of a single uniform draw in (0, 1).
double laplace_from_uniform(double u, double scale);
/// Throws invalid-argument when scale <= 0.
double laplace_sample(Rng& rng, double scale);

/// Child-stream identifiers shared across modules.
namespace streams {
inline constexpr std::uint64_t kMixing = 1;
inline constexpr std::uint64_t kLagMatrices = 2;
inline constexpr std::uint64_t kLagMask = 3;
inline constexpr std::uint64_t kSequences = 10;
inline constexpr std::uint64_t kEncoder = 20;
inline constexpr std::uint64_t kDecoder = 21;
inline constexpr std::uint64_t kBatches = 30;
inline constexpr std::uint64_t kRestarts = 40;
}  // namespace streams

}  // namespace tcrl
