#include "tcrl/model.hpp"

#include "tcrl/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tcrl {

namespace {

void check_dynamics(const ModelParams& p) {
    require(is_strictly_lower(p.m_hat), "instantaneous estimate has entries on or above the diagonal");
}

void keep_topk(double* v, Eigen::Index n, int k, double* mask, std::vector<Eigen::Index>& idx) {
    idx.resize(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [v](Eigen::Index a, Eigen::Index b) {
        const double fa = std::abs(v[a]);
        const double fb = std::abs(v[b]);
        return fa > fb || (fa == fb && a < b);
    });
    std::vector<char> keep(static_cast<std::size_t>(n), 0);
    for (int r = 0; r < k; ++r) keep[idx[r]] = 1;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!keep[j]) v[j] = 0.0;
        if (mask) mask[j] = keep[j] ? 1.0 : 0.0;
    }
}

}  // namespace

double combine_losses(const LossTerms& t, const TrainConfig& c) {
    return t.recon + c.alpha * t.noise + c.beta_b * t.sparsity_b + c.beta_m * t.sparsity_m;
}

Vector topk_filter(const Vector& v, int k) {
    require(k >= 0 && k <= v.size(), "topk must lie in [0, len(v)]");
    Vector out = v;
    if (k == 0) return out;
    std::vector<Eigen::Index> idx;
    keep_topk(out.data(), out.size(), k, nullptr, idx);
    return out;
}

void topk_rows(Matrix& z, int k, Matrix* mask) {
    require(k >= 0 && k <= z.cols(), "topk must lie in [0, n_feat]");
    if (mask) mask->setOnes(z.rows(), z.cols());
    if (k == 0) return;
    std::vector<Eigen::Index> idx;
    for (Eigen::Index r = 0; r < z.rows(); ++r)
        keep_topk(z.row(r).data(), z.cols(), k, mask ? mask->row(r).data() : nullptr, idx);
}

Vector encode(const Vector& x, const ModelParams& p) {
    require(x.size() == p.observed_dim(), "encode: input dimension mismatch");
    Vector z = p.enc * x;
    if (p.has_bias()) z += p.enc_bias;
    return topk_filter(z, p.topk);
}

Vector decode(const Vector& z, const ModelParams& p) {
    require(z.size() == p.features(), "decode: code dimension mismatch");
    Vector x = p.dec * z;
    if (p.has_bias()) x += p.dec_bias;
    return x;
}

Matrix encode_rows(const Matrix& x, const ModelParams& p, Matrix* mask) {
    require(x.cols() == p.observed_dim(), "encode: input dimension mismatch");
    Matrix z(x.rows(), p.features());
    z.noalias() = x * p.enc.transpose();
    if (p.has_bias()) z.rowwise() += p.enc_bias.transpose();
    topk_rows(z, p.topk, mask);
    return z;
}

Matrix decode_rows(const Matrix& z, const ModelParams& p) {
    require(z.cols() == p.features(), "decode: code dimension mismatch");
    Matrix x(z.rows(), p.observed_dim());
    x.noalias() = z * p.dec.transpose();
    if (p.has_bias()) x.rowwise() += p.dec_bias.transpose();
    return x;
}

Vector residual_noise(const Vector& z_now, std::span<const Vector> z_hist, const ModelParams& p) {
    check_dynamics(p);
    require(z_now.size() == p.features(), "residual: code dimension mismatch");
    require(static_cast<int>(z_hist.size()) == p.tau_max(), "residual: history must hold tau_max codes");
    Vector eps = z_now - p.m_hat * z_now;
    for (int tau = 1; tau <= p.tau_max(); ++tau) {
        require(z_hist[tau - 1].size() == p.features(), "residual: history dimension mismatch");
        eps.noalias() -= p.b_hat[tau - 1] * z_hist[tau - 1];
    }
    return eps;
}

Matrix residual_rows(const Matrix& z_now, std::span<const Matrix> z_lags, const ModelParams& p) {
    check_dynamics(p);
    require(z_now.cols() == p.features(), "residual: code dimension mismatch");
    require(static_cast<int>(z_lags.size()) == p.tau_max(), "residual: history must hold tau_max code blocks");
    Matrix eps = z_now;
    eps.noalias() -= z_now * p.m_hat.transpose();
    for (int tau = 1; tau <= p.tau_max(); ++tau) {
        require(z_lags[tau - 1].rows() == z_now.rows() && z_lags[tau - 1].cols() == p.features(),
                "residual: history shape mismatch");
        eps.noalias() -= z_lags[tau - 1] * p.b_hat[tau - 1].transpose();
    }
    return eps;
}

double loss_recon(const WindowBatch& batch, const ModelParams& p) {
    require(batch.size() > 0, "empty window batch");
    const Matrix xh = decode_rows(encode_rows(batch.current, p), p);
    return (xh - batch.current).squaredNorm() / static_cast<double>(batch.current.size());
}

double loss_noise(const WindowBatch& batch, const ModelParams& p) {
    require(batch.size() > 0, "empty window batch");
    require(batch.tau_max() == p.tau_max(), "window history length differs from tau_max");
    std::vector<Matrix> lags;
    for (const auto& x : batch.lagged) lags.push_back(encode_rows(x, p));
    const Matrix eps = residual_rows(encode_rows(batch.current, p), lags, p);
    return eps.cwiseAbs().sum() / static_cast<double>(eps.size());
}

std::pair<double, double> loss_sparsity(const ModelParams& p) {
    check_dynamics(p);
    const double cells = static_cast<double>(p.features()) * p.features();
    double sb = 0.0;
    for (const auto& b : p.b_hat) sb += b.cwiseAbs().sum() / cells;
    return {sb, p.m_hat.cwiseAbs().sum() / cells};
}

ForwardTrace forward(const WindowBatch& batch, const ModelParams& p, const TrainConfig& c) {
    require(batch.size() > 0, "empty window batch");
    require(batch.tau_max() == p.tau_max(), "window history length differs from tau_max");
    ForwardTrace tr;
    tr.z_hats.reserve(batch.lagged.size() + 1);
    tr.z_hats.push_back(encode_rows(batch.current, p));
    for (const auto& x : batch.lagged) tr.z_hats.push_back(encode_rows(x, p));
    tr.x_hat = decode_rows(tr.z_hats[0], p);
    tr.eps_hat = residual_rows(tr.z_hats[0], std::span<const Matrix>(tr.z_hats).subspan(1), p);
    tr.losses.recon = (tr.x_hat - batch.current).squaredNorm() / static_cast<double>(batch.current.size());
    tr.losses.noise = tr.eps_hat.cwiseAbs().sum() / static_cast<double>(tr.eps_hat.size());
    std::tie(tr.losses.sparsity_b, tr.losses.sparsity_m) = loss_sparsity(p);
    tr.losses.total = combine_losses(tr.losses, c);
    return tr;
}

SeriesBatch encode_series(const SeriesBatch& observed, const ModelParams& p) {
    require(observed.dim() == p.observed_dim(), "observed dimension differs from the model");
    SeriesBatch out(p.features(), SeriesKind::Latent);
    for (const auto& s : observed.sequences()) out.add({s.seq_id, encode_rows(s.rows, p)});
    return out;
}

void standardize_features(ModelParams& p, const SeriesBatch& observed) {
    const SeriesBatch codes = encode_series(observed, p);
    const auto n = p.features();
    Vector sq = Vector::Zero(n);
    double rows = 0.0;
    for (const auto& s : codes.sequences()) {
        sq += s.rows.colwise().squaredNorm().transpose();
        rows += static_cast<double>(s.rows.rows());
    }
    if (rows == 0.0) return;
    Vector s(n), inv(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double rms = std::sqrt(sq[i] / rows);
        s[i] = rms > 0.0 ? 1.0 / rms : 1.0;
        inv[i] = 1.0 / s[i];
    }
    p.enc = s.asDiagonal() * p.enc;
    p.dec = p.dec * inv.asDiagonal();
    if (p.has_bias()) p.enc_bias = s.cwiseProduct(p.enc_bias);
    for (auto& b : p.b_hat) b = s.asDiagonal() * b * inv.asDiagonal();
    p.m_hat = s.asDiagonal() * p.m_hat * inv.asDiagonal();
    p.apply_mask();
}

void normalize_decoder_columns(ModelParams& p) {
    for (Eigen::Index i = 0; i < p.dec.cols(); ++i) {
        const double norm = p.dec.col(i).norm();
        if (norm > 0.0) p.dec.col(i) /= norm;
    }
}

ModelParams init_params(int observed_dim, const TrainConfig& c, std::uint64_t seed) {
    c.validate();
    require(observed_dim > 0, "observed dimension must be positive");
    const int m = observed_dim;
    const int n = c.n_feat > 0 ? c.n_feat : m;
    require(c.topk <= n, "topk exceeds the number of features");
    const double u = 1.0 / std::sqrt(static_cast<double>(m));
    const Rng root(seed);
    Rng er = root.child(streams::kEncoder);
    Rng dr = root.child(streams::kDecoder);
    ModelParams p;
    p.enc.resize(n, m);
    p.dec.resize(m, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) p.enc(i, j) = er.uniform(-u, u);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) p.dec(i, j) = dr.uniform(-u, u);
    p.b_hat.assign(c.tau_max, Matrix::Zero(n, n));
    p.m_hat = Matrix::Zero(n, n);
    if (c.use_bias) {
        p.enc_bias = Vector::Zero(n);
        p.dec_bias = Vector::Zero(m);
    }
    p.topk = c.topk;
    if (c.unit_decoder) normalize_decoder_columns(p);
    return p;
}

}  // namespace tcrl
