#include "tcrl/core.hpp"

#include <cmath>

namespace tcrl {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "invalid-argument";
        case ErrorKind::FormatError: return "format-error";
        case ErrorKind::CorruptStream: return "corrupt-stream";
        case ErrorKind::CorruptSidecar: return "corrupt-sidecar";
        case ErrorKind::NumericFailure: return "numeric-failure";
        case ErrorKind::DegenerateScale: return "degenerate-scale";
        case ErrorKind::UndefinedScore: return "undefined-score";
        case ErrorKind::NotFound: return "not-found";
        case ErrorKind::Io: return "io-error";
    }
    return "unknown";
}

Error::Error(ErrorKind kind, const std::string& what)
    : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

bool all_finite(const Matrix& m) { return m.allFinite(); }

bool is_strictly_lower(const Matrix& m) {
    if (m.rows() != m.cols()) return false;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = i; j < m.cols(); ++j)
            if (m(i, j) != 0.0) return false;
    return true;
}

void apply_strict_lower_mask(Matrix& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = i; j < m.cols(); ++j) m(i, j) = 0.0;
}

GroundTruthSystem::GroundTruthSystem(Matrix mixing, std::vector<Matrix> lag_stack,
                                     Matrix instantaneous, double noise_scale, LatentInit init)
    : mixing_(std::move(mixing)),
      lags_(std::move(lag_stack)),
      inst_(std::move(instantaneous)),
      noise_scale_(noise_scale),
      init_(init) {
    require(!lags_.empty(), "ground truth needs at least one lag matrix");
    const auto n = inst_.rows();
    require(n > 0 && inst_.cols() == n, "instantaneous matrix must be square and non-empty");
    require(mixing_.cols() == n && mixing_.rows() > 0, "mixing must be m x n");
    for (const auto& b : lags_)
        require(b.rows() == n && b.cols() == n, "lag matrices must be n x n");
    require(std::isfinite(noise_scale_) && noise_scale_ > 0.0, "noise scale must be positive");
    require(all_finite(mixing_) && all_finite(inst_), "ground truth matrices must be finite");
    for (const auto& b : lags_) require(all_finite(b), "lag matrices must be finite");
    require(is_strictly_lower(inst_), "instantaneous matrix must be strictly lower triangular");
    if (mixing_.rows() >= n) {
        Eigen::ColPivHouseholderQR<Matrix> qr(mixing_);
        qr.setThreshold(1e-8);
        require(qr.rank() == n, "mixing must have full column rank");
    }
}

SeriesBatch::SeriesBatch(int dim, SeriesKind kind) : dim_(dim), kind_(kind) {
    require(dim > 0, "series dimension must be positive");
}

SeriesBatch::SeriesBatch(int dim, SeriesKind kind, std::vector<Sequence> sequences)
    : SeriesBatch(dim, kind) {
    seqs_.reserve(sequences.size());
    for (auto& s : sequences) add(std::move(s));
}

void SeriesBatch::add(Sequence seq) {
    require(seq.rows.cols() == dim_, "sequence dimension does not match batch");
    seqs_.push_back(std::move(seq));
}

std::size_t SeriesBatch::total_rows() const {
    std::size_t n = 0;
    for (const auto& s : seqs_) n += static_cast<std::size_t>(s.rows.rows());
    return n;
}

Matrix SeriesBatch::stacked() const {
    Matrix out(static_cast<Eigen::Index>(total_rows()), dim_);
    Eigen::Index r = 0;
    for (const auto& s : seqs_) {
        out.middleRows(r, s.rows.rows()) = s.rows;
        r += s.rows.rows();
    }
    return out;
}

bool operator==(const SeriesBatch& a, const SeriesBatch& b) {
    if (a.dim_ != b.dim_ || a.kind_ != b.kind_ || a.seqs_.size() != b.seqs_.size()) return false;
    for (std::size_t k = 0; k < a.seqs_.size(); ++k) {
        const auto& x = a.seqs_[k];
        const auto& y = b.seqs_[k];
        if (x.seq_id != y.seq_id || x.rows.rows() != y.rows.rows() || x.rows != y.rows) return false;
    }
    return true;
}

Matrix ModelParams::masked_m() const {
    Matrix m = m_hat;
    apply_strict_lower_mask(m);
    return m;
}

void ModelParams::validate() const {
    const auto n = enc.rows();
    const auto m = enc.cols();
    require(n > 0 && m > 0, "encoder must be non-empty");
    require(dec.rows() == m && dec.cols() == n, "decoder shape must be m x n_feat");
    require(!b_hat.empty(), "model needs at least one lag matrix");
    for (const auto& b : b_hat) require(b.rows() == n && b.cols() == n, "lag matrix shape");
    require(m_hat.rows() == n && m_hat.cols() == n, "instantaneous matrix shape");
    require(is_strictly_lower(m_hat), "instantaneous estimate has entries on or above the diagonal");
    if (enc_bias.size() > 0 || dec_bias.size() > 0)
        require(enc_bias.size() == n && dec_bias.size() == m, "bias vectors must be both present with shapes n_feat and m");
    require(topk >= 0 && topk <= n, "topk must lie in [0, n_feat]");
}

void TrainConfig::validate() const {
    require(std::isfinite(lr) && lr > 0.0, "lr must be positive");
    require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight decay must be >= 0");
    require(batch > 0, "batch must be positive");
    require(steps >= 0, "steps must be >= 0");
    require(std::isfinite(alpha) && alpha >= 0.0, "alpha must be >= 0");
    require(std::isfinite(beta_b) && beta_b >= 0.0, "beta_b must be >= 0");
    require(std::isfinite(beta_m) && beta_m >= 0.0, "beta_m must be >= 0");
    require(tau_max >= 1, "tau_max must be >= 1");
    require(topk >= 0, "topk must be >= 0");
    require(n_feat >= 0, "n_feat must be >= 0");
    require(restarts >= 1, "restarts must be >= 1");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0,
            "adam betas must lie in [0, 1)");
    require(adam_eps > 0.0, "adam epsilon must be positive");
}

}  // namespace tcrl
