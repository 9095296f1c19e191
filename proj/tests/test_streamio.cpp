#include "tcrl/datagen.hpp"
#include "tcrl/optim.hpp"
#include "tcrl/rng.hpp"
#include "tcrl/streamio.hpp"
#include "tcrl/windows.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace tcrl;

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

class TempDir {
public:
    TempDir() {
        path_ = fs::temp_directory_path() /
                ("tcrl_streamio_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

Matrix f32_matrix(Rng& r, int rows, int cols) {
    Matrix m(rows, cols);
    for (int i = 0; i < m.size(); ++i) m.data()[i] = static_cast<float>(r.normal() * std::exp(r.uniform(-5, 5)));
    return m;
}

std::string bytes_of(const fs::path& p) { return read_file(p); }

void write_bytes(const fs::path& p, const std::string& s) {
    std::ofstream f(p, std::ios::binary);
    f.write(s.data(), static_cast<std::streamsize>(s.size()));
}

SeriesBatch golden_batch() {
    SeriesBatch b(3, SeriesKind::Observed);
    b.add({7, (Matrix(2, 3) << 1.5, -2.0, 0.25, 3.0, 4.0, -0.125).finished()});
    b.add({42, (Matrix(1, 3) << 0.1, -0.0, 65504.0).finished()});
    b.add({9000000000ULL, (Matrix(3, 3) << 1e-3, 2.5e10, -7.75, 0.0, 1.0, -1.0, 123.456, -0.5, 8.0).finished()});
    return b;
}

}  // namespace

TEST(ActivationStream, ByteAccounting) {
    TempDir dir;
    SeriesBatch b(3, SeriesKind::Observed);
    b.add({0, Matrix::Ones(2, 3)});
    EXPECT_EQ(write_stream(b, dir / "one.acts"), 52u);
    EXPECT_EQ(fs::file_size(dir / "one.acts"), 52u);
    EXPECT_EQ(write_stream(SeriesBatch(5, SeriesKind::Observed), dir / "empty.acts"), 16u);
    const std::string h = bytes_of(dir / "empty.acts");
    EXPECT_EQ(h.substr(0, 4), "ACTS");
    EXPECT_EQ(h[4], 1);
    EXPECT_EQ(h[8], 5);
    EXPECT_EQ(read_stream(dir / "empty.acts").size(), 0u);
}

TEST(ActivationStream, GoldenFileFromIndependentWriter) {
    const fs::path golden = fs::path(TCRL_TEST_DATA) / "golden.acts";
    const SeriesBatch read = read_stream(golden);
    const SeriesBatch want = golden_batch();
    ASSERT_EQ(read.size(), want.size());
    EXPECT_EQ(read.dim(), 3);
    for (std::size_t k = 0; k < want.size(); ++k) {
        EXPECT_EQ(read.sequences()[k].seq_id, want.sequences()[k].seq_id);
        const Matrix& a = read.sequences()[k].rows;
        const Matrix& e = want.sequences()[k].rows;
        ASSERT_EQ(a.rows(), e.rows());
        for (int i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], static_cast<double>(static_cast<float>(e.data()[i])));
    }
    EXPECT_TRUE(std::signbit(read.sequences()[1].rows(0, 1)));
    TempDir dir;
    write_stream(want, dir / "mine.acts");
    EXPECT_EQ(bytes_of(dir / "mine.acts"), bytes_of(golden));
}

TEST(ActivationStream, RandomRoundTripsAreExact) {
    TempDir dir;
    Rng r(1);
    for (int trial = 0; trial < 100; ++trial) {
        const int dim = 1 + static_cast<int>(r.below(9));
        SeriesBatch b(dim, SeriesKind::Observed);
        const int seqs = static_cast<int>(r.below(6));
        for (int k = 0; k < seqs; ++k) b.add({r.next_u64(), f32_matrix(r, 1 + static_cast<int>(r.below(20)), dim)});
        const auto path = dir / "rt.acts";
        write_stream(b, path);
        ASSERT_TRUE(read_stream(path) == b) << "trial " << trial;
    }
}

TEST(ActivationStream, ValuesRoundToNearestFloat) {
    TempDir dir;
    SeriesBatch b(2, SeriesKind::Observed);
    b.add({0, (Matrix(1, 2) << 0.1, 1.0 + 1e-12).finished()});
    write_stream(b, dir / "q.acts");
    const Matrix got = read_stream(dir / "q.acts").sequences()[0].rows;
    EXPECT_EQ(got(0, 0), static_cast<double>(0.1f));
    EXPECT_EQ(got(0, 1), 1.0);
}

TEST(ActivationStream, ReadingTwiceGivesTheSameBatch) {
    TempDir dir;
    Rng r(2);
    SeriesBatch b(4, SeriesKind::Observed);
    b.add({3, f32_matrix(r, 10, 4)});
    write_stream(b, dir / "a.acts");
    EXPECT_TRUE(read_stream(dir / "a.acts") == read_stream(dir / "a.acts"));
    const auto s = inspect_stream(dir / "a.acts");
    EXPECT_EQ(s.dim, 4u);
    EXPECT_EQ(s.sequences, 1u);
    EXPECT_EQ(s.rows, 10u);
    EXPECT_TRUE(s.finite);
}

TEST(ActivationStream, HeaderErrors) {
    TempDir dir;
    SeriesBatch b(3, SeriesKind::Observed);
    b.add({0, Matrix::Ones(2, 3)});
    write_stream(b, dir / "ok.acts");
    const std::string good = bytes_of(dir / "ok.acts");
    auto variant = [&](std::size_t at, char v) {
        std::string s = good;
        s[at] = v;
        write_bytes(dir / "bad.acts", s);
        return dir / "bad.acts";
    };
    expect_error(ErrorKind::FormatError, [&] { read_stream(variant(0, 'X')); });
    expect_error(ErrorKind::FormatError, [&] { read_stream(variant(4, 2)); });
    expect_error(ErrorKind::FormatError, [&] { read_stream(variant(12, 1)); });
    expect_error(ErrorKind::FormatError, [&] { read_stream(variant(13, 1)); });
    std::string zero_dim = good;
    std::memset(zero_dim.data() + 8, 0, 4);
    write_bytes(dir / "bad.acts", zero_dim);
    expect_error(ErrorKind::FormatError, [&] { read_stream(dir / "bad.acts"); });
    write_bytes(dir / "bad.acts", good.substr(0, 10));
    expect_error(ErrorKind::CorruptStream, [&] { read_stream(dir / "bad.acts"); });
    expect_error(ErrorKind::Io, [&] { read_stream(dir / "missing.acts"); });
}

TEST(ActivationStream, TruncationReportsOffset) {
    TempDir dir;
    SeriesBatch b(3, SeriesKind::Observed);
    b.add({0, Matrix::Ones(2, 3)});
    write_stream(b, dir / "ok.acts");
    const std::string good = bytes_of(dir / "ok.acts");
    write_bytes(dir / "short.acts", good.substr(0, good.size() - 4));
    try {
        read_stream(dir / "short.acts");
        ADD_FAILURE() << "expected corrupt-stream";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::CorruptStream);
        EXPECT_NE(std::string(e.what()).find("28"), std::string::npos) << e.what();
    }
    write_bytes(dir / "head.acts", good.substr(0, 20));
    expect_error(ErrorKind::CorruptStream, [&] { read_stream(dir / "head.acts"); });
    std::string zero_len = good;
    std::memset(zero_len.data() + 24, 0, 4);
    write_bytes(dir / "zero.acts", zero_len.substr(0, 28));
    expect_error(ErrorKind::CorruptStream, [&] { read_stream(dir / "zero.acts"); });
}

TEST(Sidecar, ExactRoundTrip) {
    TempDir dir;
    const auto s = make_fixed3(4);
    write_sidecar(s, dir / "f.sidecar");
    const auto back = read_sidecar(dir / "f.sidecar");
    EXPECT_EQ(back.mixing(), s.mixing());
    EXPECT_EQ(back.lag_stack()[0], s.lag_stack()[0]);
    EXPECT_EQ(back.instantaneous(), s.instantaneous());
    EXPECT_EQ(back.noise_scale(), s.noise_scale());
    GenSpec g;
    g.preset = Preset::Custom;
    g.n = 4;
    g.m = 6;
    g.lag = 3;
    g.noise_scale = 0.3;
    const auto c = make_custom(g);
    write_sidecar(c, dir / "c.sidecar");
    const auto cb = read_sidecar(dir / "c.sidecar");
    ASSERT_EQ(cb.lags(), 3);
    for (int t = 0; t < 3; ++t) EXPECT_EQ(cb.lag_stack()[t], c.lag_stack()[t]);
    EXPECT_EQ(cb.noise_scale(), 0.3);
}

TEST(Sidecar, Errors) {
    TempDir dir;
    const auto s = make_fixed3(4);
    write_sidecar(s, dir / "f.sidecar");
    const std::string good = bytes_of(dir / "f.sidecar");
    std::string v = good;
    v[4] = 9;
    write_bytes(dir / "v.sidecar", v);
    expect_error(ErrorKind::FormatError, [&] { read_sidecar(dir / "v.sidecar"); });
    // Drop INST: header 16, MIXA 12 + 72, LAGB 12 + 72, then INST 12 + 72, NOIS 12 + 8.
    const std::size_t inst = 16 + 84 + 84;
    write_bytes(dir / "m.sidecar", good.substr(0, inst) + good.substr(inst + 84));
    expect_error(ErrorKind::CorruptSidecar, [&] { read_sidecar(dir / "m.sidecar"); });
    write_bytes(dir / "t.sidecar", good.substr(0, good.size() - 3));
    expect_error(ErrorKind::CorruptSidecar, [&] { read_sidecar(dir / "t.sidecar"); });
}

TEST(Checkpoint, RoundTripWithAdamState) {
    TempDir dir;
    TrainConfig c;
    c.tau_max = 2;
    c.n_feat = 5;
    c.topk = 2;
    c.use_bias = true;
    ModelParams p = init_params(4, c, 3);
    Rng r(4);
    p.b_hat[1] = f32_matrix(r, 5, 5);
    p.m_hat = f32_matrix(r, 5, 5);
    p.apply_mask();
    AdamState a = AdamState::for_params(p, c);
    a.step_count = 17;
    a.first_moment[3](0, 2) = 0.125;
    write_checkpoint(p, &a, dir / "x.ckpt");
    const Checkpoint back = read_checkpoint(dir / "x.ckpt");
    EXPECT_EQ(back.params.enc, p.enc);
    EXPECT_EQ(back.params.b_hat[1], p.b_hat[1]);
    EXPECT_EQ(back.params.m_hat, p.m_hat);
    EXPECT_EQ(back.params.dec_bias, p.dec_bias);
    EXPECT_EQ(back.params.topk, 2);
    ASSERT_TRUE(back.adam.has_value());
    EXPECT_EQ(back.adam->step_count, 17);
    EXPECT_EQ(back.adam->first_moment[3](0, 2), 0.125);
    write_checkpoint(p, nullptr, dir / "y.ckpt");
    EXPECT_FALSE(read_checkpoint(dir / "y.ckpt").adam.has_value());
    std::string bytes = bytes_of(dir / "y.ckpt");
    bytes[0] = 'Z';
    write_bytes(dir / "z.ckpt", bytes);
    expect_error(ErrorKind::FormatError, [&] { read_checkpoint(dir / "z.ckpt"); });
}

TEST(LossCsv, RoundTripIsExact) {
    TempDir dir;
    Rng r(5);
    std::vector<LossRecord> curve(25);
    for (std::size_t k = 0; k < curve.size(); ++k) {
        curve[k].step = static_cast<std::int64_t>(k);
        curve[k].losses = {r.uniform01(), r.normal(), 1e-300 * r.uniform01(), r.uniform01() * 1e20, r.normal()};
    }
    write_loss_csv(curve, dir / "l.csv");
    EXPECT_EQ(bytes_of(dir / "l.csv").substr(0, 41), "step,recon,noise,sparsity_b,sparsity_m,to");
    const auto back = read_loss_csv(dir / "l.csv");
    ASSERT_EQ(back.size(), curve.size());
    for (std::size_t k = 0; k < curve.size(); ++k) {
        EXPECT_EQ(back[k].step, curve[k].step);
        EXPECT_EQ(back[k].losses.noise, curve[k].losses.noise);
        EXPECT_EQ(back[k].losses.sparsity_b, curve[k].losses.sparsity_b);
    }
    EXPECT_EQ(format_double(0.5), "0.5");
    EXPECT_EQ(format_double(1e-7), "1e-07");
}

TEST(Windows, CountExamples) {
    SeriesBatch b(2, SeriesKind::Observed);
    b.add({0, Matrix::Zero(25, 2)});
    EXPECT_EQ(window_count(b, 20), 5u);
    b.add({1, Matrix::Zero(20, 2)});
    b.add({2, Matrix::Zero(3, 2)});
    EXPECT_EQ(window_count(b, 20), 5u);
    EXPECT_EQ(enumerate_windows(b, 20).size(), 5u);
    expect_error(ErrorKind::InvalidArgument, [&] { window_iter(b, 0); });
}

TEST(Windows, CountMatchesFormulaForRandomLengths) {
    Rng r(6);
    for (int trial = 0; trial < 100; ++trial) {
        SeriesBatch b(1, SeriesKind::Observed);
        const int tau = 1 + static_cast<int>(r.below(8));
        std::size_t expect = 0;
        const int seqs = static_cast<int>(r.below(7));
        for (int k = 0; k < seqs; ++k) {
            const int len = 1 + static_cast<int>(r.below(15));
            b.add({static_cast<std::uint64_t>(k), Matrix::Zero(len, 1)});
            expect += static_cast<std::size_t>(std::max(0, len - tau));
        }
        std::size_t walked = 0;
        for (auto it = window_iter(b, tau).begin(); it != window_iter(b, tau).end(); ++it) ++walked;
        EXPECT_EQ(window_count(b, tau), expect);
        EXPECT_EQ(walked, expect);
        EXPECT_EQ(all_windows(b, tau).size(), expect);
    }
}

TEST(Windows, NeverCrossSequences) {
    SeriesBatch b(1, SeriesKind::Observed);
    // Values encode (sequence, time) so every row is identifiable.
    for (int k = 0; k < 3; ++k) {
        Matrix rows(6 + k, 1);
        for (int t = 0; t < rows.rows(); ++t) rows(t, 0) = 100.0 * k + t;
        b.add({static_cast<std::uint64_t>(k), rows});
    }
    const int tau = 3;
    auto range = window_iter(b, tau);
    for (auto it = range.begin(); it != range.end(); ++it) {
        const Window& w = *it;
        const auto ref = it.ref();
        const double base = 100.0 * ref.seq;
        EXPECT_EQ(w.current[0], base + ref.t);
        ASSERT_EQ(w.history.rows(), tau);
        for (int h = 0; h < tau; ++h) EXPECT_EQ(w.history(h, 0), base + ref.t - tau + h);
    }
}

TEST(Windows, GatherMatchesMakeWindow) {
    Rng r(7);
    SeriesBatch b(3, SeriesKind::Observed);
    b.add({0, f32_matrix(r, 10, 3)});
    b.add({1, f32_matrix(r, 8, 3)});
    const auto refs = enumerate_windows(b, 2);
    const WindowBatch wb = gather(b, refs, 2);
    std::vector<Window> ws;
    for (std::size_t k = 0; k < refs.size(); ++k) {
        const Window w = make_window(b, refs[k], 2);
        EXPECT_EQ(Vector(wb.current.row(k).transpose()), w.current);
        EXPECT_EQ(wb.lagged[0].row(k), w.history.row(1));
        EXPECT_EQ(wb.lagged[1].row(k), w.history.row(0));
        ws.push_back(w);
    }
    const WindowBatch stacked = stack_windows(ws);
    EXPECT_EQ(stacked.current, wb.current);
    EXPECT_EQ(stacked.lagged[1], wb.lagged[1]);
}

TEST(AtomicWrite, ReplacesWholeFile) {
    TempDir dir;
    write_file_atomic(dir / "f.txt", "first version, long");
    write_file_atomic(dir / "f.txt", "second");
    EXPECT_EQ(read_file(dir / "f.txt"), "second");
    int leftovers = 0;
    for (const auto& e : fs::directory_iterator(dir / "")) leftovers += e.path().filename() != "f.txt";
    EXPECT_EQ(leftovers, 0);
}
