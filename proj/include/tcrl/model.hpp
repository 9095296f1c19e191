#pragma once

#include "tcrl/core.hpp"
#include "tcrl/windows.hpp"

#include <span>
#include <utility>
#include <vector>

namespace tcrl {

struct LossTerms {
    double recon = 0.0;
    double noise = 0.0;
    double sparsity_b = 0.0;
    double sparsity_m = 0.0;
    double total = 0.0;
};

/// total = recon + alpha * noise + beta_b * sparsity_b + beta_m * sparsity_m.
double combine_losses(const LossTerms& terms, const TrainConfig& config);

struct ForwardTrace {
    /// z_hats[0] holds the codes of the current rows, z_hats[tau] those of
    /// x_{t-tau}; all post-TopK, one row per window.
    std::vector<Matrix> z_hats;
    Matrix x_hat;
    Matrix eps_hat;
    LossTerms losses;
};

/// Zeroes every entry outside the k largest magnitudes; equal magnitudes keep
/// the lower index. k = 0 passes v through.
Vector topk_filter(const Vector& v, int k);
/// Row-wise TopK in place. When `mask` is given it receives the 0/1 keep mask.
void topk_rows(Matrix& z, int k, Matrix* mask = nullptr);

Vector encode(const Vector& x, const ModelParams& params);
Vector decode(const Vector& z, const ModelParams& params);
/// Batched forms: one observation (or code) per row.
Matrix encode_rows(const Matrix& x, const ModelParams& params, Matrix* mask = nullptr);
Matrix decode_rows(const Matrix& z, const ModelParams& params);

/// eps = z_now - M z_now - sum_tau B_tau z_hist[tau - 1]; z_hist is in lag
/// order (z_hist[0] is the code one step back).
Vector residual_noise(const Vector& z_now, std::span<const Vector> z_hist, const ModelParams& params);
/// Batched residual; z_lags[tau - 1] holds the codes tau steps back.
Matrix residual_rows(const Matrix& z_now, std::span<const Matrix> z_lags, const ModelParams& params);

double loss_recon(const WindowBatch& batch, const ModelParams& params);
double loss_noise(const WindowBatch& batch, const ModelParams& params);
/// (sum_tau mean|B_tau|, mean|masked M|); both means run over all n_feat^2 entries.
std::pair<double, double> loss_sparsity(const ModelParams& params);

ForwardTrace forward(const WindowBatch& batch, const ModelParams& params, const TrainConfig& config);

/// Codes for every row of every sequence.
SeriesBatch encode_series(const SeriesBatch& observed, const ModelParams& params);

/// Rescales features so their codes have unit root-mean-square on `observed`:
/// enc <- S enc, dec <- dec S^-1, X <- S X S^-1 for every B and M. This is an
/// exact reparametrization when topk is 0. Features with zero RMS are left alone.
void standardize_features(ModelParams& params, const SeriesBatch& observed);

/// Projects every nonzero decoder column onto the unit sphere. Nothing else
/// changes, so this is a constraint rather than a reparametrization.
void normalize_decoder_columns(ModelParams& params);

/// Parameters in the configured shape: enc/dec uniform(-1/sqrt(m), 1/sqrt(m))
/// from the encoder and decoder child streams of `seed`, dynamics zero.
ModelParams init_params(int observed_dim, const TrainConfig& config, std::uint64_t seed);

}  // namespace tcrl
