#pragma once

#include "tcrl/core.hpp"

#include <cstdint>
#include <utility>
#include <vector>

namespace tcrl {

enum class Preset { Fixed3, Scalable, Custom };

const char* to_string(Preset p);
Preset parse_preset(const std::string& name);

struct GenSpec {
    Preset preset = Preset::Fixed3;
    int n = 3;
    int m = 3;
    int num_sequences = 100;
    int seq_len = 512;
    int lag = 1;
    double sparsity_b = 0.1;
    double chain_weight = 0.5;
    double noise_scale = 1.0;
    std::uint64_t seed = 123;

    /// Forces the preset's structural constraints (fixed3: n = m = 3, lag 1;
    /// scalable: lag 1, m = n, chain M) and validates the rest.
    void normalize();
};

/// B = [[0.4,0.6,0],[0,1,0],[0,0,1]], M has 0.2 on the sub-diagonal, unit
/// Laplace noise. The mixing is a random orthogonal matrix (Haar), so its
/// condition number is 1.
GroundTruthSystem make_fixed3(std::uint64_t seed);

/// round(0.1 n^2) nonzero lag entries at uniformly chosen positions with
/// values uniform(-1, 1) / sqrt(0.1 n); chain M with weight 0.5; random
/// orthogonal mixing. Resampled (up to 100 times) until the spectral radius
/// of (I - M)^-1 B is below one.
GroundTruthSystem make_scalable(int n, std::uint64_t seed);

/// General system from a GenSpec: `lag` sparse lag matrices, chain M of
/// `chain_weight`, Gaussian m x n mixing.
GroundTruthSystem make_custom(const GenSpec& spec);

GroundTruthSystem make_system(const GenSpec& spec);

/// One step of the instantaneous recursion, evaluated in ascending index
/// order: z[i] = hist[i] + sum_{j<i} M[i][j] z[j] + noise[i].
Vector sem_step(const Vector& z_hist_sum, const Matrix& m, const Vector& noise);

/// Spectral radius of the companion matrix of the reduced-form VAR
/// z_t = sum_tau (I - M)^-1 B_tau z_{t-tau} + ...
double reduced_spectral_radius(const std::vector<Matrix>& lag_stack, const Matrix& m);

struct GenOptions {
    /// lag x n rows replacing the uniform01 initial state of every sequence.
    const Matrix* initial_state = nullptr;
    /// When set, receives per-sequence noise draws (T x n, zero in burn-in rows).
    std::vector<Matrix>* noise_out = nullptr;
};

struct GeneratedData {
    SeriesBatch latent;
    SeriesBatch observed;
};

/// Sequence k uses the child stream kSequences -> k, so output does not
/// depend on how sequences are scheduled.
GeneratedData generate(const GroundTruthSystem& system, const GenSpec& spec,
                       const GenOptions& options = {});

}  // namespace tcrl
