#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tcrl {

/// Row-major 64-bit matrix used for every tensor in the pipeline.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class ErrorKind {
    InvalidArgument,
    FormatError,
    CorruptStream,
    CorruptSidecar,
    NumericFailure,
    DegenerateScale,
    UndefinedScore,
    NotFound,
    Io,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what);
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

inline void require(bool cond, const std::string& what) {
    if (!cond) fail(ErrorKind::InvalidArgument, what);
}

bool all_finite(const Matrix& m);
bool is_strictly_lower(const Matrix& m);
/// Zeroes the diagonal and everything above it.
void apply_strict_lower_mask(Matrix& m);

// ---------------------------------------------------------------------------
// Ground truth
// ---------------------------------------------------------------------------

enum class LatentInit { Uniform01 };

/// Generating triple of the linear latent temporal SEM:
///   z_t = sum_tau B_tau z_{t-tau} + M z_t + eps_t,   x_t = A z_t,
/// with eps ~ Laplace(0, noise_scale). Immutable once built.
class GroundTruthSystem {
public:
    /// Validates shapes, finiteness, strict lower-triangular M and (when
    /// m >= n) full column rank of the mixing at tolerance 1e-8.
    GroundTruthSystem(Matrix mixing, std::vector<Matrix> lag_stack, Matrix instantaneous,
                      double noise_scale, LatentInit init = LatentInit::Uniform01);

    const Matrix& mixing() const noexcept { return mixing_; }
    const std::vector<Matrix>& lag_stack() const noexcept { return lags_; }
    const Matrix& instantaneous() const noexcept { return inst_; }
    double noise_scale() const noexcept { return noise_scale_; }
    LatentInit latent_init() const noexcept { return init_; }

    int latent_dim() const noexcept { return static_cast<int>(inst_.rows()); }
    int observed_dim() const noexcept { return static_cast<int>(mixing_.rows()); }
    int lags() const noexcept { return static_cast<int>(lags_.size()); }

private:
    Matrix mixing_;
    std::vector<Matrix> lags_;
    Matrix inst_;
    double noise_scale_;
    LatentInit init_;
};

// ---------------------------------------------------------------------------
// Series
// ---------------------------------------------------------------------------

enum class SeriesKind { Latent, Observed };

struct Sequence {
    std::uint64_t seq_id = 0;
    Matrix rows;  // T_k x dim, row order is temporal order
};

/// Ordered collection of sequences sharing one dimension. Adjacency is only
/// meaningful inside a sequence.
class SeriesBatch {
public:
    SeriesBatch(int dim, SeriesKind kind);
    SeriesBatch(int dim, SeriesKind kind, std::vector<Sequence> sequences);

    void add(Sequence seq);

    int dim() const noexcept { return dim_; }
    SeriesKind kind() const noexcept { return kind_; }
    const std::vector<Sequence>& sequences() const noexcept { return seqs_; }
    std::size_t size() const noexcept { return seqs_.size(); }
    bool empty() const noexcept { return seqs_.empty(); }
    std::size_t total_rows() const;

    /// All rows stacked in sequence order (for pooled statistics only).
    Matrix stacked() const;

    friend bool operator==(const SeriesBatch& a, const SeriesBatch& b);

private:
    int dim_;
    SeriesKind kind_;
    std::vector<Sequence> seqs_;
};

// ---------------------------------------------------------------------------
// Model parameters and training configuration
// ---------------------------------------------------------------------------

/// Learnable state of the linear temporal autoencoder. `m_hat` is stored
/// dense; only its strictly lower triangle is ever read.
struct ModelParams {
    Matrix enc;                 // n_feat x m
    Matrix dec;                 // m x n_feat
    std::vector<Matrix> b_hat;  // tau_max matrices, n_feat x n_feat
    Matrix m_hat;               // n_feat x n_feat
    Vector enc_bias;            // empty unless biases are enabled
    Vector dec_bias;
    int topk = 0;

    int features() const noexcept { return static_cast<int>(enc.rows()); }
    int observed_dim() const noexcept { return static_cast<int>(enc.cols()); }
    int tau_max() const noexcept { return static_cast<int>(b_hat.size()); }
    bool has_bias() const noexcept { return enc_bias.size() > 0; }

    Matrix masked_m() const;
    /// Re-establishes the DAG constraint after an update.
    void apply_mask() { apply_strict_lower_mask(m_hat); }
    /// Throws invalid-argument on inconsistent shapes or an M̂ with mass on or
    /// above the diagonal.
    void validate() const;
};

struct TrainConfig {
    double lr = 8e-3;
    double weight_decay = 6e-4;
    int batch = 1024;
    int steps = 1000;
    double alpha = 0.1;
    double beta_b = 1e-8;
    double beta_m = 1e-3;
    int tau_max = 1;
    int topk = 0;
    std::uint64_t seed = 123;
    int n_feat = 0;  // 0: same as observed dim
    bool use_bias = false;
    int restarts = 1;
    bool unit_decoder = true;  // keep decoder columns on the unit sphere
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const;
};

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct LagError {
    double max_abs = 0.0;
    double frobenius = 0.0;
    double f1 = 0.0;
};

struct RelationScore {
    int i = 0;
    int j = 0;
    double score = 0.0;
};

struct EvalReport {
    double mcc = 0.0;
    std::vector<int> permutation;   // true index -> estimated feature
    std::vector<double> scaling;    // z_i ≈ scaling[i] * ẑ_{permutation[i]}
    std::vector<int> degenerate;    // zero-variance true coordinates
    std::vector<int> degenerate_features;  // zero-variance estimated features
    Matrix corr;
    bool aligned = false;           // false when a matched scale was zero
    std::vector<LagError> b_error;
    LagError m_error;
    std::vector<RelationScore> relation_scores;  // aligned scores at true off-diagonal edges
};

}  // namespace tcrl
