#pragma once

#include "tcrl/core.hpp"
#include "tcrl/model.hpp"
#include "tcrl/windows.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace tcrl {

struct GradientSet {
    Matrix d_enc;
    Matrix d_dec;
    std::vector<Matrix> d_b;
    Matrix d_m;  // strictly lower triangular
    Vector d_enc_bias;
    Vector d_dec_bias;

    static GradientSet zeros_like(const ModelParams& p);
    GradientSet& operator+=(const GradientSet& other);
};

struct AdamState {
    std::vector<Matrix> first_moment;   // one per tensor in tensor_names() order
    std::vector<Matrix> second_moment;
    std::int64_t step_count = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState for_params(const ModelParams& p, const TrainConfig& config);
};

/// Stable tensor order shared by the optimizer and the checkpoint format:
/// enc, dec, b_hat.1 .. b_hat.L, m_hat, then enc_bias and dec_bias when enabled.
std::vector<std::string> tensor_names(const ModelParams& p);

/// Worker count: hardware concurrency capped by TCRL_THREADS when set.
int worker_threads();

/// Exact gradient of forward(...).losses.total. sign(0) = 0 for every L1
/// term; TopK passes gradients through kept coordinates only. The batch is
/// split into fixed-size shards whose partial sums are added in shard order,
/// so the result does not depend on the number of workers.
GradientSet gradients(const WindowBatch& batch, const ModelParams& params, const TrainConfig& config,
                      LossTerms* losses = nullptr, int threads = 0);

/// Removes from each decoder-column gradient its component along that column,
/// so a step moves tangent to the unit sphere.
void project_decoder_gradient(const ModelParams& params, GradientSet& grads);

/// Bias-corrected Adam with decoupled weight decay on enc, dec, B and M;
/// re-applies the triangular mask to M afterwards.
void adam_step(ModelParams& params, const GradientSet& grads, AdamState& state, const TrainConfig& config);

struct LossRecord {
    std::int64_t step = 0;
    LossTerms losses;
};

struct TrainResult {
    ModelParams params;
    AdamState adam;
    std::vector<LossRecord> curve;  // curve of the selected restart
    int selected_restart = 0;
    std::vector<double> restart_scores;
};

/// Scale-free fit statistic of residual noise against a Laplace shape:
/// mean over coordinates of mean|eps_i| / std(eps_i). Equals 1/sqrt(2) for
/// Laplace residuals and grows when sources stay mixed.
double laplace_contrast(const Matrix& eps);

struct TrainOptions {
    /// Called after every optimizer step with the pre-update batch losses.
    std::function<void(int restart, const LossRecord&)> on_step;
    /// Initial parameters for restart 0 (checkpoint resume); shapes must
    /// match the configuration.
    const ModelParams* init = nullptr;
    const AdamState* init_adam = nullptr;
    int threads = 0;
};

/// Enumerates all windows, then runs config.restarts independent runs of
/// config.steps Adam steps, each step on `batch` windows drawn uniformly with
/// replacement. With several restarts the run whose residuals have the lowest
/// laplace_contrast on the training windows is returned.
TrainResult train(const SeriesBatch& data, const TrainConfig& config, const TrainOptions& options = {});

}  // namespace tcrl
