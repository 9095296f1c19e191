#include "support/gradcheck.hpp"

#include "tcrl/datagen.hpp"
#include "tcrl/optim.hpp"
#include "tcrl/rng.hpp"
#include "tcrl/windows.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>

using namespace tcrl;
using tcrl::testing::gaussian;

namespace {

template <class F>
void expect_error(ErrorKind kind, F&& f) {
    try {
        f();
        ADD_FAILURE() << "expected " << to_string(kind);
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), kind) << e.what();
    }
}

SeriesBatch fixed3_observed(int seqs, int len, std::uint64_t seed = 5) {
    const auto s = make_fixed3(seed);
    GenSpec g;
    g.num_sequences = seqs;
    g.seq_len = len;
    g.seed = seed;
    return generate(s, g).observed;
}

}  // namespace

TEST(Gradients, MatchFiniteDifferencesOnRandomConfigs) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        auto c = tcrl::testing::random_case(seed);
        const auto r = tcrl::testing::check_gradients(c);
        EXPECT_LE(r.worst_rel, 1e-5) << "seed " << seed << " at " << r.worst_at;
        EXPECT_GT(r.checked, 0);
    }
}

TEST(Gradients, FourByFourTwoLagExample) {
    auto c = tcrl::testing::random_case(1);
    Rng r(99);
    c.n = c.m = 4;
    c.tau = 2;
    c.topk = 0;
    c.config.tau_max = 2;
    c.config.topk = 0;
    c.config.n_feat = 4;
    c.config.use_bias = false;
    c.params.enc = gaussian(r, 4, 4, 0.7);
    c.params.dec = gaussian(r, 4, 4, 0.7);
    c.params.b_hat = {gaussian(r, 4, 4, 0.4), gaussian(r, 4, 4, 0.4)};
    c.params.m_hat = gaussian(r, 4, 4, 0.4);
    c.params.apply_mask();
    c.params.enc_bias.resize(0);
    c.params.dec_bias.resize(0);
    c.params.topk = 0;
    c.batch.lagged = {gaussian(r, 12, 4, 1), gaussian(r, 12, 4, 1)};
    c.batch.current = gaussian(r, 12, 4, 1);
    const auto res = tcrl::testing::check_gradients(c, 1e-5);
    EXPECT_LE(res.worst_rel, 1e-5) << res.worst_at;
}

TEST(Gradients, ZeroParamsWithoutPenaltiesAreStationary) {
    TrainConfig c;
    c.alpha = c.beta_b = c.beta_m = 0.0;
    c.tau_max = 2;
    ModelParams p;
    p.enc = Matrix::Zero(3, 4);
    p.dec = Matrix::Zero(4, 3);
    p.b_hat.assign(2, Matrix::Zero(3, 3));
    p.m_hat = Matrix::Zero(3, 3);
    Rng r(1);
    WindowBatch b;
    b.lagged = {gaussian(r, 10, 4, 1), gaussian(r, 10, 4, 1)};
    b.current = gaussian(r, 10, 4, 1);
    const auto g = gradients(b, p, c);
    EXPECT_EQ(g.d_enc, Matrix::Zero(3, 4));
    EXPECT_EQ(g.d_dec, Matrix::Zero(4, 3));
}

TEST(Gradients, InstantaneousL1Derivative) {
    TrainConfig c;
    c.alpha = c.beta_b = 0.0;
    c.beta_m = 0.5;
    ModelParams p;
    p.enc = Matrix::Identity(3, 3);
    p.dec = Matrix::Identity(3, 3);
    p.b_hat = {Matrix::Zero(3, 3)};
    p.m_hat = Matrix::Zero(3, 3);
    p.m_hat(2, 0) = 0.3;
    p.m_hat(1, 0) = -0.1;
    WindowBatch b;
    b.lagged = {Matrix::Ones(2, 3)};
    b.current = Matrix::Ones(2, 3);
    const auto g = gradients(b, p, c);
    EXPECT_DOUBLE_EQ(g.d_m(2, 0), 0.5 / 9.0);
    EXPECT_DOUBLE_EQ(g.d_m(1, 0), -0.5 / 9.0);
    EXPECT_EQ(g.d_m(2, 1), 0.0);  // sign(0) = 0
    EXPECT_TRUE(is_strictly_lower(g.d_m));
}

TEST(Gradients, IndependentOfThreadCount) {
    auto c = tcrl::testing::random_case(77);
    Rng r(3);
    c.batch.current = gaussian(r, 2000, c.m, 1.0);
    for (auto& l : c.batch.lagged) l = gaussian(r, 2000, c.m, 1.0);
    const auto g1 = gradients(c.batch, c.params, c.config, nullptr, 1);
    const auto g4 = gradients(c.batch, c.params, c.config, nullptr, 4);
    EXPECT_EQ(g1.d_enc, g4.d_enc);
    EXPECT_EQ(g1.d_dec, g4.d_dec);
    EXPECT_EQ(g1.d_m, g4.d_m);
    for (std::size_t t = 0; t < g1.d_b.size(); ++t) EXPECT_EQ(g1.d_b[t], g4.d_b[t]);
}

TEST(Gradients, ReportedLossesMatchForward) {
    auto c = tcrl::testing::random_case(12);
    LossTerms l;
    gradients(c.batch, c.params, c.config, &l);
    const auto f = forward(c.batch, c.params, c.config).losses;
    EXPECT_NEAR(l.total, f.total, 1e-12);
    EXPECT_NEAR(l.noise, f.noise, 1e-12);
}

TEST(Gradients, ProjectionRemovesRadialComponent) {
    auto c = tcrl::testing::random_case(4);
    auto g = gradients(c.batch, c.params, c.config);
    project_decoder_gradient(c.params, g);
    for (Eigen::Index j = 0; j < c.params.dec.cols(); ++j)
        EXPECT_NEAR(c.params.dec.col(j).dot(g.d_dec.col(j)), 0.0, 1e-12);
}

TEST(Adam, ZeroGradientWithoutDecayLeavesParams) {
    auto c = tcrl::testing::random_case(2);
    c.config.weight_decay = 0.0;
    const ModelParams before = c.params;
    AdamState s = AdamState::for_params(c.params, c.config);
    adam_step(c.params, GradientSet::zeros_like(c.params), s, c.config);
    EXPECT_EQ(c.params.enc, before.enc);
    EXPECT_EQ(c.params.dec, before.dec);
    EXPECT_EQ(c.params.m_hat, before.m_hat);
    EXPECT_EQ(s.step_count, 1);
}

TEST(Adam, FirstStepFormula) {
    auto c = tcrl::testing::random_case(3);
    c.config.lr = 0.01;
    c.config.weight_decay = 0.2;
    const ModelParams before = c.params;
    const auto g = gradients(c.batch, c.params, c.config);
    AdamState s = AdamState::for_params(c.params, c.config);
    adam_step(c.params, g, s, c.config);
    // Step 1: m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps).
    for (Eigen::Index i = 0; i < before.enc.size(); ++i) {
        const double w = before.enc.data()[i] * (1.0 - 0.01 * 0.2);
        const double gi = g.d_enc.data()[i];
        EXPECT_NEAR(c.params.enc.data()[i], w - 0.01 * gi / (std::abs(gi) + 1e-8), 1e-15);
    }
}

TEST(Adam, MaskSurvivesManyRandomUpdates) {
    auto c = tcrl::testing::random_case(9);
    AdamState s = AdamState::for_params(c.params, c.config);
    Rng r(10);
    for (int k = 0; k < 1000; ++k) {
        GradientSet g = GradientSet::zeros_like(c.params);
        g.d_enc = gaussian(r, g.d_enc.rows(), g.d_enc.cols(), 1);
        g.d_m = gaussian(r, g.d_m.rows(), g.d_m.cols(), 1);
        adam_step(c.params, g, s, c.config);
        ASSERT_TRUE(is_strictly_lower(c.params.m_hat));
    }
    EXPECT_EQ(s.step_count, 1000);
}

TEST(Adam, RejectsMismatchedState) {
    auto a = tcrl::testing::random_case(1);
    auto b = tcrl::testing::random_case(2);
    AdamState s = AdamState::for_params(b.params, b.config);
    if (a.params.tau_max() != b.params.tau_max() || a.params.has_bias() != b.params.has_bias() ||
        a.params.features() != b.params.features() || a.params.observed_dim() != b.params.observed_dim())
        expect_error(ErrorKind::InvalidArgument,
                     [&] { adam_step(a.params, GradientSet::zeros_like(a.params), s, a.config); });
}

TEST(Adam, NonFiniteUpdateFails) {
    auto c = tcrl::testing::random_case(5);
    AdamState s = AdamState::for_params(c.params, c.config);
    GradientSet g = GradientSet::zeros_like(c.params);
    g.d_dec(0, 0) = std::numeric_limits<double>::quiet_NaN();
    expect_error(ErrorKind::NumericFailure, [&] { adam_step(c.params, g, s, c.config); });
}

TEST(TensorNames, StableOrder) {
    auto c = tcrl::testing::random_case(6);
    const auto names = tensor_names(c.params);
    EXPECT_EQ(names.front(), "enc");
    EXPECT_EQ(names[1], "dec");
    EXPECT_EQ(names[2], "b_hat.1");
    EXPECT_EQ(names[2 + c.params.tau_max()], "m_hat");
}

TEST(LaplaceContrast, KnownValues) {
    Rng r(2);
    Matrix lap(200000, 1), gauss(200000, 1);
    for (int i = 0; i < 200000; ++i) {
        lap(i, 0) = laplace_sample(r, 3.0);
        gauss(i, 0) = r.normal();
    }
    EXPECT_NEAR(laplace_contrast(lap), 1.0 / std::sqrt(2.0), 0.01);
    EXPECT_NEAR(laplace_contrast(gauss), std::sqrt(2.0 / 3.141592653589793), 0.01);
}

TEST(Train, ZeroStepsReturnsInitialParams) {
    const auto x = fixed3_observed(2, 20);
    TrainConfig c;
    c.steps = 0;
    const auto res = train(x, c);
    const ModelParams init = init_params(3, c, c.seed);
    EXPECT_EQ(res.params.enc, init.enc);
    EXPECT_EQ(res.params.dec, init.dec);
    EXPECT_TRUE(res.curve.empty());
}

TEST(Train, SameSeedSameCurve) {
    const auto x = fixed3_observed(4, 40);
    TrainConfig c;
    c.steps = 30;
    c.batch = 64;
    const auto a = train(x, c);
    const auto b = train(x, c);
    ASSERT_EQ(a.curve.size(), 30u);
    for (std::size_t k = 0; k < a.curve.size(); ++k) EXPECT_EQ(a.curve[k].losses.total, b.curve[k].losses.total);
    EXPECT_EQ(a.params.enc, b.params.enc);
    TrainOptions one, many;
    one.threads = 1;
    many.threads = 3;
    EXPECT_EQ(train(x, c, one).params.enc, train(x, c, many).params.enc);
}

TEST(Train, NoWindowsIsRejected) {
    const auto x = fixed3_observed(3, 2);
    TrainConfig c;
    c.tau_max = 2;
    expect_error(ErrorKind::InvalidArgument, [&] { train(x, c); });
}

TEST(Train, TotalLossDecreasesOnFixed3) {
    const auto x = fixed3_observed(100, 60);
    TrainConfig c;
    c.steps = 200;
    const auto res = train(x, c);
    auto avg = [&](std::size_t from) {
        double s = 0;
        for (std::size_t k = from; k < from + 20; ++k) s += res.curve[k].losses.total;
        return s / 20;
    };
    EXPECT_LT(avg(180), avg(0));
}

TEST(Train, ReconDrivenTowardZeroOnNoiselessData) {
    // Full-rank deterministic rotation series; only the reconstruction term is active.
    Rng r(4);
    const Matrix a = gaussian(r, 4, 4, 1.0);
    SeriesBatch x(4, SeriesKind::Observed);
    for (int k = 0; k < 20; ++k) x.add({static_cast<std::uint64_t>(k), gaussian(r, 50, 4, 1.0) * a});
    TrainConfig c;
    c.alpha = c.beta_b = c.beta_m = 0.0;
    c.weight_decay = 0.0;
    c.unit_decoder = false;
    c.steps = 1500;
    c.batch = 128;
    c.lr = 1e-2;
    const auto res = train(x, c);
    std::vector<double> blocks;
    for (std::size_t s = 0; s + 100 <= res.curve.size(); s += 100) {
        double sum = 0;
        for (std::size_t k = s; k < s + 100; ++k) sum += res.curve[k].losses.recon;
        blocks.push_back(sum / 100);
    }
    for (std::size_t k = 1; k < blocks.size(); ++k) EXPECT_LT(blocks[k], blocks[k - 1]) << "block " << k;
    EXPECT_LT(blocks.back(), 1e-3 * blocks.front());
}

TEST(Train, MaskedEntriesStayZero) {
    const auto x = fixed3_observed(10, 50);
    TrainConfig c;
    c.steps = 50;
    c.batch = 32;
    c.beta_m = 0.5;
    EXPECT_TRUE(is_strictly_lower(train(x, c).params.m_hat));
}

TEST(Train, UnitDecoderKeepsColumnsNormalized) {
    const auto x = fixed3_observed(10, 50);
    TrainConfig c;
    c.steps = 25;
    c.batch = 32;
    const auto p = train(x, c).params;
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(p.dec.col(j).norm(), 1.0, 1e-12);
}

TEST(Train, RestartsPickLowestContrast) {
    const auto x = fixed3_observed(20, 50);
    TrainConfig c;
    c.steps = 40;
    c.batch = 64;
    c.restarts = 3;
    const auto res = train(x, c);
    ASSERT_EQ(res.restart_scores.size(), 3u);
    const auto best = std::min_element(res.restart_scores.begin(), res.restart_scores.end());
    EXPECT_EQ(res.selected_restart, best - res.restart_scores.begin());
}
