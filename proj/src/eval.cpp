#include "tcrl/eval.hpp"

#include "tcrl/assignment.hpp"
#include "tcrl/model.hpp"
#include "tcrl/windows.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tcrl {

MccResult mcc_rows(const Matrix& zt, const Matrix& ze) {
    require(zt.rows() == ze.rows(), "true and estimated series must have the same number of steps");
    require(zt.rows() >= 2, "correlation needs at least two time steps");
    require(zt.cols() >= 1 && zt.cols() <= ze.cols(), "estimate needs at least as many features as the truth");
    const double rows = static_cast<double>(zt.rows());
    const Matrix ct = zt.rowwise() - zt.colwise().mean();
    const Matrix ce = ze.rowwise() - ze.colwise().mean();
    const Vector vt = ct.colwise().squaredNorm().transpose() / rows;
    const Vector ve = ce.colwise().squaredNorm().transpose() / rows;
    const Matrix cov = (ct.transpose() * ce) / rows;

    MccResult out;
    MatchResult& mr = out.match;
    for (Eigen::Index i = 0; i < vt.size(); ++i)
        if (!(vt[i] > 0.0)) mr.degenerate_true.push_back(static_cast<int>(i));
    for (Eigen::Index j = 0; j < ve.size(); ++j)
        if (!(ve[j] > 0.0)) mr.degenerate_est.push_back(static_cast<int>(j));
    mr.corr = Matrix::Zero(zt.cols(), ze.cols());
    for (Eigen::Index i = 0; i < zt.cols(); ++i)
        for (Eigen::Index j = 0; j < ze.cols(); ++j)
            if (vt[i] > 0.0 && ve[j] > 0.0)
                mr.corr(i, j) = std::clamp(cov(i, j) / std::sqrt(vt[i] * ve[j]), -1.0, 1.0);

    mr.permutation = max_weight_assignment(mr.corr.cwiseAbs());
    mr.signed_scale.resize(zt.cols());
    double total = 0.0;
    for (Eigen::Index i = 0; i < zt.cols(); ++i) {
        const int j = mr.permutation[i];
        total += std::abs(mr.corr(i, j));
        mr.signed_scale[i] = ve[j] > 0.0 ? cov(i, j) / ve[j] : 0.0;
    }
    out.score = total / static_cast<double>(zt.cols());
    return out;
}

MccResult mcc(const SeriesBatch& t, const SeriesBatch& e) {
    require(t.size() == e.size(), "true and estimated batches differ in sequence count");
    for (std::size_t k = 0; k < t.size(); ++k)
        require(t.sequences()[k].rows.rows() == e.sequences()[k].rows.rows(),
                "true and estimated sequences are not aligned in time");
    return mcc_rows(t.stacked(), e.stacked());
}

Matrix align_matrix(const Matrix& est, const MatchResult& mr) {
    const auto n = static_cast<Eigen::Index>(mr.permutation.size());
    require(mr.signed_scale.size() == mr.permutation.size(), "match is missing scales");
    for (Eigen::Index i = 0; i < n; ++i) {
        require(mr.permutation[i] >= 0 && mr.permutation[i] < est.rows(), "permutation index out of range");
        if (mr.signed_scale[i] == 0.0)
            fail(ErrorKind::DegenerateScale, "matched scale of latent " + std::to_string(i) + " is zero");
    }
    require(est.rows() == est.cols(), "dynamics matrix must be square");
    Matrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            out(i, j) = mr.signed_scale[i] * est(mr.permutation[i], mr.permutation[j]) / mr.signed_scale[j];
    return out;
}

AlignedDynamics align_dynamics(const ModelParams& p, const MatchResult& mr) {
    AlignedDynamics out;
    for (const auto& b : p.b_hat) out.b.push_back(align_matrix(b, mr));
    out.m = align_matrix(p.masked_m(), mr);
    return out;
}

LagError structure_error(const Matrix& a, const Matrix& t, double threshold) {
    require(a.rows() == t.rows() && a.cols() == t.cols(), "structure error needs equal shapes");
    LagError e;
    const Matrix d = a - t;
    e.max_abs = d.size() ? d.cwiseAbs().maxCoeff() : 0.0;
    e.frobenius = d.norm();
    long tp = 0, pred = 0, truth = 0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            const bool p = std::abs(a(i, j)) > threshold;
            const bool q = t(i, j) != 0.0;
            pred += p;
            truth += q;
            tp += p && q;
        }
    e.f1 = (pred + truth == 0) ? 1.0 : 2.0 * tp / static_cast<double>(pred + truth);
    return e;
}

StructureReport structure_error(const AlignedDynamics& a, const GroundTruthSystem& sys, double threshold) {
    StructureReport r;
    const auto n = sys.latent_dim();
    const std::size_t lags = std::max(a.b.size(), sys.lag_stack().size());
    const Matrix zero = Matrix::Zero(n, n);
    for (std::size_t t = 0; t < lags; ++t) {
        const Matrix& est = t < a.b.size() ? a.b[t] : zero;
        const Matrix& tru = t < sys.lag_stack().size() ? sys.lag_stack()[t] : zero;
        r.b.push_back(structure_error(est, tru, threshold));
    }
    r.m = structure_error(a.m, sys.instantaneous(), threshold);
    return r;
}

Matrix aggregate_lags(const std::vector<Matrix>& stack) {
    require(!stack.empty(), "aggregate_lags needs at least one lag");
    Matrix agg = stack.front();
    for (std::size_t t = 1; t < stack.size(); ++t) {
        require(stack[t].rows() == agg.rows() && stack[t].cols() == agg.cols(), "lag matrices differ in shape");
        for (Eigen::Index k = 0; k < agg.size(); ++k)
            if (std::abs(stack[t].data()[k]) > std::abs(agg.data()[k])) agg.data()[k] = stack[t].data()[k];
    }
    return agg;
}

double relation_recovery_score(const Matrix& b, int i, int j) {
    require(i >= 0 && i < b.rows() && j >= 0 && j < b.cols(), "relation index out of range");
    const double mean = b.mean();
    const double var = (b.array() - mean).square().sum() / static_cast<double>(b.size());
    const double sd = std::sqrt(var);
    if (!(sd > 0.0)) fail(ErrorKind::UndefinedScore, "matrix has zero standard deviation");
    return b(i, j) / sd;
}

Vector mean_activation(const SeriesBatch& codes) {
    Vector sum = Vector::Zero(codes.dim());
    double rows = 0.0;
    for (const auto& s : codes.sequences()) {
        sum += s.rows.cwiseAbs().colwise().sum().transpose();
        rows += static_cast<double>(s.rows.rows());
    }
    return rows > 0.0 ? Vector(sum / rows) : sum;
}

FeaturePair contrastive_top_pair(const SeriesBatch& pos, const SeriesBatch& neg, const Matrix& b, double threshold) {
    require(pos.dim() == neg.dim() && b.rows() == pos.dim() && b.cols() == pos.dim(),
            "codes and aggregated matrix differ in dimension");
    const Vector ap = mean_activation(pos);
    const Vector an = mean_activation(neg);
    std::vector<char> ok(pos.dim(), 0);
    for (int f = 0; f < pos.dim(); ++f)
        ok[f] = threshold > 0.0 ? (ap[f] > threshold && an[f] < threshold) : ap[f] > 0.0;
    FeaturePair best;
    double best_mag = -1.0;
    for (int i = 0; i < b.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
            if (i == j || !ok[i] || !ok[j]) continue;
            const double mag = std::abs(b(i, j));
            if (mag > best_mag) {
                best_mag = mag;
                best = {i, j};
            }
        }
    if (best_mag < 0.0) fail(ErrorKind::NotFound, "no feature pair fires on pos while staying quiet on neg");
    return best;
}

std::vector<Matrix> baseline_regression(const SeriesBatch& codes, int tau_max, double ridge) {
    require(tau_max >= 1, "tau_max must be >= 1");
    require(ridge >= 0.0, "ridge must be >= 0");
    const WindowBatch wb = all_windows(codes, tau_max);
    require(wb.size() > 0, "no windows for regression");
    const auto n = codes.dim();
    Matrix x(wb.size(), n * tau_max);
    for (int t = 0; t < tau_max; ++t) x.middleCols(t * n, n) = wb.lagged[t];
    Matrix gram = x.transpose() * x;
    gram.diagonal().array() += ridge;
    const Matrix w = gram.ldlt().solve(x.transpose() * wb.current);  // (n tau) x n
    std::vector<Matrix> out;
    for (int t = 0; t < tau_max; ++t) out.push_back(w.middleRows(t * n, n).transpose());
    return out;
}

std::vector<RelationScore> top_coordinates(const Matrix& b, int k) {
    require(k >= 0, "k must be >= 0");
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(b.size()));
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), idx.size());
    std::partial_sort(idx.begin(), idx.begin() + take, idx.end(), [&](Eigen::Index x, Eigen::Index y) {
        const double a = std::abs(b.data()[x]);
        const double c = std::abs(b.data()[y]);
        return a > c || (a == c && x < y);
    });
    std::vector<RelationScore> out;
    for (std::size_t r = 0; r < take; ++r) {
        const int i = static_cast<int>(idx[r] / b.cols());
        const int j = static_cast<int>(idx[r] % b.cols());
        out.push_back({i, j, relation_recovery_score(b, i, j)});
    }
    return out;
}

EvalReport evaluate(const GroundTruthSystem& sys, const SeriesBatch& true_latents, const SeriesBatch& observed,
                    const ModelParams& params, double threshold) {
    require(true_latents.dim() == sys.latent_dim(), "latent batch does not match the system");
    const SeriesBatch codes = encode_series(observed, params);
    const MccResult res = mcc(true_latents, codes);
    EvalReport r;
    r.mcc = res.score;
    r.permutation = res.match.permutation;
    r.scaling = res.match.signed_scale;
    r.degenerate = res.match.degenerate_true;
    r.degenerate_features = res.match.degenerate_est;
    r.corr = res.match.corr;
    r.aligned = std::none_of(r.scaling.begin(), r.scaling.end(), [](double d) { return d == 0.0; });
    if (!r.aligned) return r;
    const AlignedDynamics al = align_dynamics(params, res.match);
    const StructureReport sr = structure_error(al, sys, threshold);
    r.b_error = sr.b;
    r.m_error = sr.m;
    const Matrix agg = aggregate_lags(al.b);
    const Matrix truth = aggregate_lags(sys.lag_stack());
    for (int i = 0; i < truth.rows(); ++i)
        for (int j = 0; j < truth.cols(); ++j)
            if (i != j && truth(i, j) != 0.0) {
                double s = 0.0;
                try {
                    s = relation_recovery_score(agg, i, j);
                } catch (const Error&) {
                }
                r.relation_scores.push_back({i, j, s});
            }
    return r;
}

}  // namespace tcrl
