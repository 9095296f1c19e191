#include "tcrl/datagen.hpp"

#include "tcrl/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tcrl {

namespace {

Matrix haar_orthogonal(int n, Rng rng) {
    Matrix g(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) g(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (int j = 0; j < n; ++j)
        if (r(j, j) < 0.0) q.col(j) *= -1.0;
    return q;
}

Matrix chain(int n, double w) {
    Matrix m = Matrix::Zero(n, n);
    for (int i = 1; i < n; ++i) m(i, i - 1) = w;
    return m;
}

double condition_number(const Matrix& a) {
    Eigen::JacobiSVD<Matrix> svd(a);
    const auto& s = svd.singularValues();
    if (s(s.size() - 1) == 0.0) return std::numeric_limits<double>::infinity();
    return s(0) / s(s.size() - 1);
}

// Exactly `count` nonzeros at positions chosen by a partial Fisher-Yates shuffle.
Matrix sparse_uniform(int n, long count, double scale, Rng pos_rng, Rng val_rng) {
    std::vector<long> cells(static_cast<std::size_t>(n) * n);
    std::iota(cells.begin(), cells.end(), 0L);
    for (long k = 0; k < count; ++k) {
        const auto r = k + static_cast<long>(pos_rng.below(cells.size() - k));
        std::swap(cells[k], cells[r]);
    }
    std::sort(cells.begin(), cells.begin() + count);
    Matrix b = Matrix::Zero(n, n);
    for (long k = 0; k < count; ++k) {
        double v = 0.0;
        while (v == 0.0) v = val_rng.uniform(-1.0, 1.0);
        b(cells[k] / n, cells[k] % n) = v * scale;
    }
    return b;
}

}  // namespace

const char* to_string(Preset p) {
    switch (p) {
        case Preset::Fixed3: return "fixed3";
        case Preset::Scalable: return "scalable";
        case Preset::Custom: return "custom";
    }
    return "unknown";
}

Preset parse_preset(const std::string& name) {
    if (name == "fixed3") return Preset::Fixed3;
    if (name == "scalable") return Preset::Scalable;
    if (name == "custom") return Preset::Custom;
    fail(ErrorKind::InvalidArgument, "unknown preset '" + name + "'");
}

void GenSpec::normalize() {
    if (preset == Preset::Fixed3) {
        n = m = 3;
        lag = 1;
    } else if (preset == Preset::Scalable) {
        m = n;
        lag = 1;
    }
    require(n >= 1 && m >= 1, "latent and observed dims must be positive");
    if (preset == Preset::Scalable) require(n >= 2, "scalable preset needs n >= 2");
    require(num_sequences >= 0, "sequence count must be >= 0");
    require(seq_len >= 1, "sequence length must be positive");
    require(lag >= 1, "lag must be positive");
    require(sparsity_b > 0.0 && sparsity_b <= 1.0, "sparsity_b must lie in (0, 1]");
    require(std::isfinite(chain_weight), "chain weight must be finite");
    require(std::isfinite(noise_scale) && noise_scale > 0.0, "noise scale must be positive");
}

GroundTruthSystem make_fixed3(std::uint64_t seed) {
    Matrix b(3, 3);
    b << 0.4, 0.6, 0.0,
         0.0, 1.0, 0.0,
         0.0, 0.0, 1.0;
    Matrix m = chain(3, 0.2);
    const Rng root(seed);
    Rng mix_rng = root.child(streams::kMixing);
    Matrix a;
    do {
        a = haar_orthogonal(3, mix_rng.child(mix_rng.next_u64()));
    } while (condition_number(a) > 100.0);
    return GroundTruthSystem(std::move(a), {std::move(b)}, std::move(m), 1.0);
}

double reduced_spectral_radius(const std::vector<Matrix>& lag_stack, const Matrix& m) {
    const auto n = m.rows();
    const auto l = static_cast<Eigen::Index>(lag_stack.size());
    const Matrix inv = (Matrix::Identity(n, n) - m).inverse();
    Matrix comp = Matrix::Zero(n * l, n * l);
    for (Eigen::Index t = 0; t < l; ++t) comp.block(0, t * n, n, n) = inv * lag_stack[t];
    if (l > 1) comp.block(n, 0, n * (l - 1), n * (l - 1)).setIdentity();
    Eigen::EigenSolver<Matrix> es(comp, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

GroundTruthSystem make_scalable(int n, std::uint64_t seed) {
    require(n >= 2, "scalable preset needs n >= 2");
    const long count = std::lround(0.1 * n * n);
    const double scale = 1.0 / std::sqrt(0.1 * n);
    const Rng root(seed);
    Matrix m = chain(n, 0.5);
    Matrix b;
    for (int attempt = 0;; ++attempt) {
        require(attempt < 100, "could not draw a stable lag matrix in 100 attempts");
        const Rng a_rng = root.child(streams::kLagMatrices).child(attempt);
        b = sparse_uniform(n, count, scale, a_rng.child(streams::kLagMask), a_rng.child(streams::kLagMatrices));
        if (reduced_spectral_radius({b}, m) < 1.0) break;
    }
    Matrix a = haar_orthogonal(n, root.child(streams::kMixing));
    return GroundTruthSystem(std::move(a), {std::move(b)}, std::move(m), 1.0);
}

GroundTruthSystem make_custom(const GenSpec& spec_in) {
    GenSpec spec = spec_in;
    spec.preset = Preset::Custom;
    spec.normalize();
    const int n = spec.n;
    const long count = std::max(1L, std::lround(spec.sparsity_b * n * n));
    const double scale = 1.0 / std::sqrt(std::max(1.0, spec.sparsity_b * n * spec.lag));
    const Rng root(spec.seed);
    Matrix m = chain(n, spec.chain_weight);
    std::vector<Matrix> stack;
    for (int attempt = 0;; ++attempt) {
        require(attempt < 100, "could not draw a stable lag stack in 100 attempts");
        const Rng a_rng = root.child(streams::kLagMatrices).child(attempt);
        stack.clear();
        for (int t = 0; t < spec.lag; ++t) {
            const Rng l_rng = a_rng.child(t);
            stack.push_back(sparse_uniform(n, count, scale, l_rng.child(streams::kLagMask),
                                           l_rng.child(streams::kLagMatrices)));
        }
        if (reduced_spectral_radius(stack, m) < 1.0) break;
    }
    Rng mix_rng = root.child(streams::kMixing);
    Matrix a(spec.m, n);
    for (int attempt = 0;; ++attempt) {
        require(attempt < 100, "could not draw a full-rank mixing in 100 attempts");
        for (int i = 0; i < spec.m; ++i)
            for (int j = 0; j < n; ++j) a(i, j) = mix_rng.normal() / std::sqrt(double(n));
        if (spec.m < n || condition_number(a) <= 1e3) break;
    }
    return GroundTruthSystem(std::move(a), std::move(stack), std::move(m), spec.noise_scale);
}

GroundTruthSystem make_system(const GenSpec& spec) {
    switch (spec.preset) {
        case Preset::Fixed3: return make_fixed3(spec.seed);
        case Preset::Scalable: return make_scalable(spec.n, spec.seed);
        case Preset::Custom: return make_custom(spec);
    }
    fail(ErrorKind::InvalidArgument, "unknown preset");
}

Vector sem_step(const Vector& z_hist_sum, const Matrix& m, const Vector& noise) {
    const auto n = z_hist_sum.size();
    require(m.rows() == n && m.cols() == n && noise.size() == n, "sem_step dimension mismatch");
    require(is_strictly_lower(m), "instantaneous matrix must be strictly lower triangular");
    require(z_hist_sum.allFinite() && noise.allFinite() && m.allFinite(), "sem_step inputs must be finite");
    Vector z(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = z_hist_sum[i] + noise[i];
        for (Eigen::Index j = 0; j < i; ++j) acc += m(i, j) * z[j];
        z[i] = acc;
    }
    return z;
}

GeneratedData generate(const GroundTruthSystem& system, const GenSpec& spec,
                       const GenOptions& options) {
    const int n = system.latent_dim();
    const int m = system.observed_dim();
    const int lag = system.lags();
    require(spec.n == n && spec.m == m, "spec dims do not match the system");
    require(spec.num_sequences >= 0 && spec.seq_len >= 1, "bad sequence shape");
    if (options.initial_state)
        require(options.initial_state->rows() == lag && options.initial_state->cols() == n,
                "initial state must be lag x n");

    GeneratedData out{SeriesBatch(n, SeriesKind::Latent), SeriesBatch(m, SeriesKind::Observed)};
    if (options.noise_out) options.noise_out->clear();
    const Rng root = Rng(spec.seed).child(streams::kSequences);
    const Matrix& mix = system.mixing();
    const Matrix& inst = system.instantaneous();
    const double b = system.noise_scale();

    for (int k = 0; k < spec.num_sequences; ++k) {
        Rng rng = root.child(static_cast<std::uint64_t>(k));
        Matrix z = Matrix::Zero(spec.seq_len, n);
        Matrix noise_rows = Matrix::Zero(spec.seq_len, n);
        const int burn = std::min(lag, spec.seq_len);
        for (int t = 0; t < burn; ++t)
            for (int i = 0; i < n; ++i)
                z(t, i) = options.initial_state ? (*options.initial_state)(t, i) : rng.uniform01();
        Vector hist(n), eps(n);
        for (int t = lag; t < spec.seq_len; ++t) {
            hist.setZero();
            for (int tau = 1; tau <= lag; ++tau)
                hist.noalias() += system.lag_stack()[tau - 1] * z.row(t - tau).transpose();
            for (int i = 0; i < n; ++i) eps[i] = laplace_sample(rng, b);
            if (!hist.allFinite())
                fail(ErrorKind::NumericFailure, "latent series diverged in sequence " + std::to_string(k));
            z.row(t) = sem_step(hist, inst, eps).transpose();
            noise_rows.row(t) = eps.transpose();
        }
        if (!z.allFinite())
            fail(ErrorKind::NumericFailure, "latent series diverged in sequence " + std::to_string(k));
        Matrix x = z * mix.transpose();
        out.latent.add({static_cast<std::uint64_t>(k), std::move(z)});
        out.observed.add({static_cast<std::uint64_t>(k), std::move(x)});
        if (options.noise_out) options.noise_out->push_back(std::move(noise_rows));
    }
    return out;
}

}  // namespace tcrl
