#pragma once

#include "tcrl/core.hpp"

#include <vector>

namespace tcrl {

struct MatchResult {
    std::vector<int> permutation;      // true index i -> estimated feature
    std::vector<double> signed_scale;  // z_i ~ signed_scale[i] * zhat_{permutation[i]}
    Matrix corr;                       // n_true x n_est Pearson correlations
    std::vector<int> degenerate_true;
    std::vector<int> degenerate_est;
};

struct MccResult {
    double score = 0.0;
    MatchResult match;
};

/// Pearson correlations pooled over all time steps, then an exact maximum
/// weight assignment on |C|. When the estimate has more features than the
/// truth, each true coordinate gets a distinct feature and the rest are
/// ignored. Zero-variance coordinates correlate 0 and are flagged.
MccResult mcc(const SeriesBatch& true_latents, const SeriesBatch& est_latents);
MccResult mcc_rows(const Matrix& true_rows, const Matrix& est_rows);

struct AlignedDynamics {
    std::vector<Matrix> b;
    Matrix m;
};

/// X_aligned[i][j] = d_i * X[pi(i)][pi(j)] / d_j. Throws degenerate-scale if
/// any d_i is zero.
Matrix align_matrix(const Matrix& est, const MatchResult& match);
AlignedDynamics align_dynamics(const ModelParams& params, const MatchResult& match);

/// Max-abs and Frobenius error, plus F1 of {|aligned| > threshold} against
/// the nonzero entries of truth. Two empty edge sets score F1 = 1.
LagError structure_error(const Matrix& aligned, const Matrix& truth, double threshold);

struct StructureReport {
    std::vector<LagError> b;
    LagError m;
};

/// Compares lag by lag; lags missing on either side count as zero matrices.
StructureReport structure_error(const AlignedDynamics& aligned, const GroundTruthSystem& truth, double threshold);

/// Signed entry of largest magnitude over lags; ties keep the smallest lag.
Matrix aggregate_lags(const std::vector<Matrix>& b_stack);

/// aggB[i][j] / population std over all entries; undefined-score when the
/// std is zero.
double relation_recovery_score(const Matrix& agg_b, int i, int j);

struct FeaturePair {
    int i = 0;
    int j = 0;
};

/// Mean absolute activation of each feature.
Vector mean_activation(const SeriesBatch& codes);

/// Off-diagonal pair (i, j), i != j, maximizing |aggB[i][j]| among features
/// whose mean absolute activation exceeds `threshold` on pos and stays below
/// it on neg. A threshold <= 0 drops the contrast test and considers every
/// feature active on pos. Throws not-found when no pair qualifies.
FeaturePair contrastive_top_pair(const SeriesBatch& pos_codes, const SeriesBatch& neg_codes,
                                 const Matrix& agg_b, double threshold = 3.0);

/// Ridge least squares z_t = sum_tau B_tau z_{t-tau} over every window.
std::vector<Matrix> baseline_regression(const SeriesBatch& codes, int tau_max, double ridge = 1e-6);

/// The k coordinates of largest |aggB|, each with its relation score,
/// ordered by magnitude (ties by row then column).
std::vector<RelationScore> top_coordinates(const Matrix& agg_b, int k);

/// MCC, alignment and structure errors of a model against the generating
/// system, using codes of `observed` against `true_latents`.
EvalReport evaluate(const GroundTruthSystem& system, const SeriesBatch& true_latents,
                    const SeriesBatch& observed, const ModelParams& params, double threshold);

}  // namespace tcrl
