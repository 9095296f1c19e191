#include "tcrl/optim.hpp"

#include "tcrl/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <string>
#include <thread>

namespace tcrl {

namespace {

constexpr Eigen::Index kShard = 256;

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

void check_finite(const Matrix& m, const char* name) {
    if (!m.allFinite()) fail(ErrorKind::NumericFailure, std::string("non-finite values in ") + name);
}

struct ShardResult {
    GradientSet g;
    double recon_sum = 0.0;
    double noise_sum = 0.0;
};

// Unnormalized contributions of rows [r0, r0 + len) scaled by the global
// batch factors, so shard results simply add.
void shard_gradient(const WindowBatch& wb, Eigen::Index r0, Eigen::Index len, const ModelParams& p,
                    const Matrix& m_masked, double recon_scale, double noise_scale,
                    ShardResult& out) {
    const int tau_max = p.tau_max();
    const auto x0 = wb.current.middleRows(r0, len);
    std::vector<Matrix> z(tau_max + 1), mask(tau_max + 1);
    z[0] = encode_rows(x0, p, &mask[0]);
    for (int tau = 1; tau <= tau_max; ++tau) z[tau] = encode_rows(wb.lagged[tau - 1].middleRows(r0, len), p, &mask[tau]);
    for (const auto& zz : z) check_finite(zz, "z_hat");

    Matrix r = decode_rows(z[0], p);
    check_finite(r, "x_hat");
    r -= x0;
    out.recon_sum += r.squaredNorm();

    Matrix eps = z[0];
    eps.noalias() -= z[0] * m_masked.transpose();
    for (int tau = 1; tau <= tau_max; ++tau) eps.noalias() -= z[tau] * p.b_hat[tau - 1].transpose();
    check_finite(eps, "eps_hat");
    out.noise_sum += eps.cwiseAbs().sum();

    const Matrix gx = r * recon_scale;
    Matrix ge = eps.unaryExpr([](double v) { return sgn(v); }) * noise_scale;

    GradientSet& g = out.g;
    g.d_dec.noalias() += gx.transpose() * z[0];
    g.d_m.noalias() -= ge.transpose() * z[0];
    for (int tau = 1; tau <= tau_max; ++tau) g.d_b[tau - 1].noalias() -= ge.transpose() * z[tau];

    Matrix gz = ge;
    gz.noalias() += gx * p.dec;
    gz.noalias() -= ge * m_masked;
    gz.array() *= mask[0].array();
    g.d_enc.noalias() += gz.transpose() * x0;
    if (p.has_bias()) {
        g.d_dec_bias += gx.colwise().sum().transpose();
        g.d_enc_bias += gz.colwise().sum().transpose();
    }
    for (int tau = 1; tau <= tau_max; ++tau) {
        Matrix gzt(len, p.features());
        gzt.noalias() = -(ge * p.b_hat[tau - 1]);
        gzt.array() *= mask[tau].array();
        g.d_enc.noalias() += gzt.transpose() * wb.lagged[tau - 1].middleRows(r0, len);
        if (p.has_bias()) g.d_enc_bias += gzt.colwise().sum().transpose();
    }
}

template <class F>
void for_each_tensor(ModelParams& p, F&& f) {
    f(p.enc.data(), p.enc.size(), true);
    f(p.dec.data(), p.dec.size(), true);
    for (auto& b : p.b_hat) f(b.data(), b.size(), true);
    f(p.m_hat.data(), p.m_hat.size(), true);
    if (p.has_bias()) {
        f(p.enc_bias.data(), p.enc_bias.size(), false);
        f(p.dec_bias.data(), p.dec_bias.size(), false);
    }
}

std::vector<const double*> grad_pointers(const GradientSet& g, bool bias) {
    std::vector<const double*> out{g.d_enc.data(), g.d_dec.data()};
    for (const auto& b : g.d_b) out.push_back(b.data());
    out.push_back(g.d_m.data());
    if (bias) {
        out.push_back(g.d_enc_bias.data());
        out.push_back(g.d_dec_bias.data());
    }
    return out;
}

}  // namespace

GradientSet GradientSet::zeros_like(const ModelParams& p) {
    GradientSet g;
    g.d_enc = Matrix::Zero(p.enc.rows(), p.enc.cols());
    g.d_dec = Matrix::Zero(p.dec.rows(), p.dec.cols());
    g.d_b.assign(p.b_hat.size(), Matrix::Zero(p.features(), p.features()));
    g.d_m = Matrix::Zero(p.features(), p.features());
    if (p.has_bias()) {
        g.d_enc_bias = Vector::Zero(p.enc_bias.size());
        g.d_dec_bias = Vector::Zero(p.dec_bias.size());
    }
    return g;
}

GradientSet& GradientSet::operator+=(const GradientSet& o) {
    d_enc += o.d_enc;
    d_dec += o.d_dec;
    for (std::size_t k = 0; k < d_b.size(); ++k) d_b[k] += o.d_b[k];
    d_m += o.d_m;
    if (d_enc_bias.size() > 0) {
        d_enc_bias += o.d_enc_bias;
        d_dec_bias += o.d_dec_bias;
    }
    return *this;
}

AdamState AdamState::for_params(const ModelParams& p, const TrainConfig& c) {
    AdamState s;
    s.beta1 = c.adam_beta1;
    s.beta2 = c.adam_beta2;
    s.eps = c.adam_eps;
    ModelParams shape = p;
    for_each_tensor(shape, [&](double*, Eigen::Index size, bool) {
        s.first_moment.push_back(Matrix::Zero(1, size));
        s.second_moment.push_back(Matrix::Zero(1, size));
    });
    return s;
}

std::vector<std::string> tensor_names(const ModelParams& p) {
    std::vector<std::string> names{"enc", "dec"};
    for (int t = 1; t <= p.tau_max(); ++t) names.push_back("b_hat." + std::to_string(t));
    names.push_back("m_hat");
    if (p.has_bias()) {
        names.push_back("enc_bias");
        names.push_back("dec_bias");
    }
    return names;
}

int worker_threads() {
    int n = static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* env = std::getenv("TCRL_THREADS")) {
        char* end = nullptr;
        const long cap = std::strtol(env, &end, 10);
        if (end != env && cap >= 1) n = std::min<long>(n, cap);
    }
    return n;
}

GradientSet gradients(const WindowBatch& wb, const ModelParams& p, const TrainConfig& c, LossTerms* losses,
                      int threads) {
    p.validate();
    require(wb.size() > 0, "empty window batch");
    require(wb.tau_max() == p.tau_max(), "window history length differs from tau_max");
    require(wb.dim() == p.observed_dim(), "window dimension differs from the model");
    for (const auto& t : {std::cref(p.enc), std::cref(p.dec), std::cref(p.m_hat)})
        if (!t.get().allFinite()) fail(ErrorKind::NumericFailure, "non-finite parameters");

    const auto n_rows = static_cast<Eigen::Index>(wb.size());
    const double recon_scale = 2.0 / (static_cast<double>(n_rows) * p.observed_dim());
    const double noise_scale = c.alpha / (static_cast<double>(n_rows) * p.features());
    const Matrix m_masked = p.masked_m();

    const Eigen::Index shards = (n_rows + kShard - 1) / kShard;
    std::vector<ShardResult> parts(static_cast<std::size_t>(shards));
    for (auto& part : parts) part.g = GradientSet::zeros_like(p);

    auto run = [&](Eigen::Index s) {
        const Eigen::Index r0 = s * kShard;
        shard_gradient(wb, r0, std::min(kShard, n_rows - r0), p, m_masked, recon_scale, noise_scale, parts[s]);
    };
    int workers = threads > 0 ? threads : worker_threads();
    workers = static_cast<int>(std::min<Eigen::Index>(workers, shards));
    if (workers <= 1) {
        for (Eigen::Index s = 0; s < shards; ++s) run(s);
    } else {
        std::atomic<Eigen::Index> next{0};
        std::vector<std::exception_ptr> errors(workers);
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
            pool.emplace_back([&, w] {
                try {
                    for (Eigen::Index s; (s = next.fetch_add(1)) < shards;) run(s);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    }

    GradientSet g = std::move(parts[0].g);
    double recon_sum = parts[0].recon_sum;
    double noise_sum = parts[0].noise_sum;
    for (std::size_t s = 1; s < parts.size(); ++s) {
        g += parts[s].g;
        recon_sum += parts[s].recon_sum;
        noise_sum += parts[s].noise_sum;
    }

    const double cells = static_cast<double>(p.features()) * p.features();
    if (c.beta_b != 0.0)
        for (int t = 0; t < p.tau_max(); ++t)
            g.d_b[t] += p.b_hat[t].unaryExpr([](double v) { return sgn(v); }) * (c.beta_b / cells);
    if (c.beta_m != 0.0) g.d_m += m_masked.unaryExpr([](double v) { return sgn(v); }) * (c.beta_m / cells);
    apply_strict_lower_mask(g.d_m);

    if (losses) {
        losses->recon = recon_sum / (static_cast<double>(n_rows) * p.observed_dim());
        losses->noise = noise_sum / (static_cast<double>(n_rows) * p.features());
        std::tie(losses->sparsity_b, losses->sparsity_m) = loss_sparsity(p);
        losses->total = combine_losses(*losses, c);
    }
    return g;
}

void project_decoder_gradient(const ModelParams& p, GradientSet& g) {
    require(g.d_dec.rows() == p.dec.rows() && g.d_dec.cols() == p.dec.cols(), "decoder gradient shape");
    for (Eigen::Index j = 0; j < p.dec.cols(); ++j) {
        const auto col = p.dec.col(j);
        const double nn = col.squaredNorm();
        if (nn > 0.0) g.d_dec.col(j) -= col * (col.dot(g.d_dec.col(j)) / nn);
    }
}

void adam_step(ModelParams& p, const GradientSet& g, AdamState& s, const TrainConfig& c) {
    const auto grads = grad_pointers(g, p.has_bias());
    require(grads.size() == s.first_moment.size(), "optimizer state does not match the parameters");
    s.step_count += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step_count));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step_count));
    std::size_t k = 0;
    for_each_tensor(p, [&](double* data, Eigen::Index size, bool decay) {
        require(s.first_moment[k].size() == size, "optimizer state shape mismatch");
        Eigen::Map<Eigen::ArrayXd> w(data, size);
        Eigen::Map<const Eigen::ArrayXd> gr(grads[k], size);
        Eigen::Map<Eigen::ArrayXd> m1(s.first_moment[k].data(), size);
        Eigen::Map<Eigen::ArrayXd> m2(s.second_moment[k].data(), size);
        m1 = s.beta1 * m1 + (1.0 - s.beta1) * gr;
        m2 = s.beta2 * m2 + (1.0 - s.beta2) * gr.square();
        if (decay && c.weight_decay != 0.0) w *= 1.0 - c.lr * c.weight_decay;
        w -= c.lr * (m1 / bc1) / ((m2 / bc2).sqrt() + s.eps);
        if (!w.allFinite()) fail(ErrorKind::NumericFailure, "non-finite values in " + tensor_names(p)[k]);
        ++k;
    });
    p.apply_mask();
}

double laplace_contrast(const Matrix& eps) {
    require(eps.rows() > 1 && eps.cols() > 0, "contrast needs at least two residual rows");
    const double rows = static_cast<double>(eps.rows());
    double total = 0.0;
    for (Eigen::Index j = 0; j < eps.cols(); ++j) {
        const auto col = eps.col(j);
        const double mean = col.mean();
        const double var = (col.array() - mean).square().sum() / rows;
        if (var <= 0.0) return std::numeric_limits<double>::infinity();
        total += col.cwiseAbs().mean() / std::sqrt(var);
    }
    return total / static_cast<double>(eps.cols());
}

namespace {

constexpr std::size_t kContrastWindows = 1u << 16;

std::uint64_t restart_seed(std::uint64_t seed, int r) {
    if (r == 0) return seed;
    return Rng(seed).child(streams::kRestarts).child(static_cast<std::uint64_t>(r)).seed();
}

double selection_score(const SeriesBatch& data, const std::vector<WindowRef>& refs, const ModelParams& p) {
    std::vector<WindowRef> pick;
    const std::size_t stride = std::max<std::size_t>(1, refs.size() / kContrastWindows);
    for (std::size_t k = 0; k < refs.size() && pick.size() < kContrastWindows; k += stride) pick.push_back(refs[k]);
    const WindowBatch wb = gather(data, pick, p.tau_max());
    std::vector<Matrix> lags;
    for (const auto& x : wb.lagged) lags.push_back(encode_rows(x, p));
    return laplace_contrast(residual_rows(encode_rows(wb.current, p), lags, p));
}

}  // namespace

TrainResult train(const SeriesBatch& data, const TrainConfig& c, const TrainOptions& opt) {
    c.validate();
    const auto refs = enumerate_windows(data, c.tau_max);
    if (refs.empty()) fail(ErrorKind::InvalidArgument, "no training windows: every sequence is too short for tau_max");

    TrainResult best;
    double best_score = std::numeric_limits<double>::infinity();
    const std::size_t batch = static_cast<std::size_t>(c.batch);
    std::vector<WindowRef> picked(batch);

    for (int r = 0; r < c.restarts; ++r) {
        const std::uint64_t seed = restart_seed(c.seed, r);
        TrainResult run;
        if (r == 0 && opt.init) {
            run.params = *opt.init;
            run.params.validate();
            require(run.params.observed_dim() == data.dim() && run.params.tau_max() == c.tau_max,
                    "initial parameters do not match data or configuration");
        } else {
            run.params = init_params(data.dim(), c, seed);
        }
        run.adam = (r == 0 && opt.init_adam) ? *opt.init_adam : AdamState::for_params(run.params, c);
        run.curve.reserve(static_cast<std::size_t>(c.steps));
        Rng batch_rng = Rng(seed).child(streams::kBatches);
        for (int step = 0; step < c.steps; ++step) {
            for (auto& w : picked) w = refs[batch_rng.below(refs.size())];
            const WindowBatch wb = gather(data, picked, c.tau_max);
            LossRecord rec;
            rec.step = run.adam.step_count;
            GradientSet g = gradients(wb, run.params, c, &rec.losses, opt.threads);
            if (c.unit_decoder) project_decoder_gradient(run.params, g);
            adam_step(run.params, g, run.adam, c);
            if (c.unit_decoder) normalize_decoder_columns(run.params);
            run.curve.push_back(rec);
            if (opt.on_step) opt.on_step(r, rec);
        }
        double score = 0.0;
        if (c.restarts > 1) {
            score = selection_score(data, refs, run.params);
            if (!std::isfinite(score)) score = std::numeric_limits<double>::max();
        }
        best.restart_scores.push_back(score);
        if (r == 0 || score < best_score) {
            best_score = score;
            auto scores = std::move(best.restart_scores);
            best = std::move(run);
            best.restart_scores = std::move(scores);
            best.selected_restart = r;
        }
    }
    return best;
}

}  // namespace tcrl
