#include "tcrl/cli.hpp"

#include "tcrl/datagen.hpp"
#include "tcrl/eval.hpp"
#include "tcrl/model.hpp"
#include "tcrl/optim.hpp"
#include "tcrl/report.hpp"
#include "tcrl/streamio.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <iostream>
#include <optional>

namespace tcrl::cli {

namespace {

// Thrown while turning flags into a validated configuration.
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class F>
auto usage_phase(F&& f) {
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::InvalidArgument) throw UsageError(e.what());
        throw;
    }
}

fs::path with_suffix(const std::string& prefix, const std::string& suffix) { return fs::path(prefix + suffix); }

void ensure_parent(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

struct GenArgs {
    std::string preset = "fixed3";
    int n = 3, m = 0, sequences = 0, seq_len = 0, lag = 1;
    double sparsity_b = 0.1, chain_weight = 0.5, noise_scale = 1.0;
    std::uint64_t seed = 123;
    std::string out = "data/fixed3";
    bool latent = false;
};

struct TrainArgs {
    std::string data, out = "run/model", init;
    TrainConfig cfg;
    int threads = 0;
};

struct EvalArgs {
    std::string data, sidecar, checkpoint, latent, out;
    double threshold = 0.05;
};

struct BenchArgs {
    std::vector<int> dims{128, 256, 512, 1024};
    long long samples = 5'000'000;
    int sequences = 20000;
    std::uint64_t seed = 123;
    double lr = 1e-3, beta_b = 1e-5, beta_m = 1e-3;
    int batch = 32;
    std::string out = "bench/scaling";
};

struct RelArgs {
    std::string pos, neg, checkpoint, baseline_checkpoint, out = "relations/report";
    double fire_threshold = 3.0;
    int tau_max = 0;
};

int cmd_gen(const GenArgs& a, std::ostream& out) {
    GenSpec spec = usage_phase([&] {
        GenSpec s;
        s.preset = parse_preset(a.preset);
        s.n = a.n;
        s.m = a.m > 0 ? a.m : a.n;
        s.lag = a.lag;
        s.sparsity_b = a.sparsity_b;
        s.chain_weight = a.chain_weight;
        s.noise_scale = a.noise_scale;
        s.seed = a.seed;
        switch (s.preset) {
            case Preset::Fixed3: s.num_sequences = 6400, s.seq_len = 9; break;
            case Preset::Scalable: s.num_sequences = 50000, s.seq_len = 2; break;
            case Preset::Custom: s.num_sequences = 100, s.seq_len = 512; break;
        }
        if (a.sequences > 0) s.num_sequences = a.sequences;
        if (a.seq_len > 0) s.seq_len = a.seq_len;
        s.normalize();
        return s;
    });
    const GroundTruthSystem sys = make_system(spec);
    const GeneratedData data = generate(sys, spec);
    const fs::path stream = with_suffix(a.out, ".acts");
    const fs::path sidecar = with_suffix(a.out, ".sidecar");
    ensure_parent(stream);
    const auto bytes = write_stream(data.observed, stream);
    write_sidecar(sys, sidecar);
    out << "wrote " << stream.string() << " (" << bytes << " bytes, " << data.observed.size() << " sequences x "
        << spec.seq_len << " steps, dim " << spec.m << ")\n";
    out << "wrote " << sidecar.string() << "\n";
    if (a.latent) {
        const fs::path lat = with_suffix(a.out, ".latent.acts");
        write_stream(data.latent, lat);
        out << "wrote " << lat.string() << "\n";
    }
    return 0;
}

int cmd_train(const TrainArgs& a, std::ostream& out) {
    usage_phase([&] {
        a.cfg.validate();
        return 0;
    });
    const SeriesBatch data = read_stream(a.data);
    TrainOptions opt;
    opt.threads = a.threads;
    std::optional<Checkpoint> init;
    if (!a.init.empty()) {
        init = read_checkpoint(a.init);
        opt.init = &init->params;
        if (init->adam) opt.init_adam = &*init->adam;
    }
    const TrainResult res = train(data, a.cfg, opt);
    const fs::path ckpt = with_suffix(a.out, ".ckpt");
    ensure_parent(ckpt);
    write_checkpoint(res.params, &res.adam, ckpt);
    write_loss_csv(res.curve, with_suffix(a.out, ".loss.csv"));
    write_file_atomic(with_suffix(a.out, ".loss.svg"), loss_plot(res.curve));
    if (a.cfg.restarts > 1) {
        out << "restart scores:";
        for (double s : res.restart_scores) out << ' ' << format_double(s);
        out << " (selected " << res.selected_restart << ")\n";
    }
    if (res.curve.empty()) {
        out << "final step=" << res.adam.step_count << " (no optimizer steps)\n";
    } else {
        const auto& l = res.curve.back();
        out << "final step=" << res.adam.step_count << " recon=" << format_double(l.losses.recon)
            << " noise=" << format_double(l.losses.noise) << " sparsity_b=" << format_double(l.losses.sparsity_b)
            << " sparsity_m=" << format_double(l.losses.sparsity_m) << " total=" << format_double(l.losses.total)
            << "\n";
    }
    out << "wrote " << ckpt.string() << "\n";
    return 0;
}

SeriesBatch latents_from_mixing(const SeriesBatch& observed, const Matrix& mixing) {
    require(mixing.rows() >= mixing.cols(), "latents cannot be recovered from a wide mixing; pass --latent");
    const Eigen::ColPivHouseholderQR<Matrix> qr(mixing);
    SeriesBatch out(static_cast<int>(mixing.cols()), SeriesKind::Latent);
    for (const auto& s : observed.sequences()) {
        const Matrix z = qr.solve(Matrix(s.rows.transpose())).transpose();
        out.add({s.seq_id, z});
    }
    return out;
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
    const GroundTruthSystem sys = read_sidecar(a.sidecar);
    const SeriesBatch observed = read_stream(a.data);
    const Checkpoint ck = read_checkpoint(a.checkpoint);
    usage_phase([&] {
        require(observed.dim() == sys.observed_dim(), "data dimension does not match the sidecar");
        require(ck.params.observed_dim() == observed.dim(), "checkpoint does not match the data dimension");
        require(ck.params.features() >= sys.latent_dim(), "checkpoint has fewer features than true latents");
        return 0;
    });
    const SeriesBatch latent = a.latent.empty() ? usage_phase([&] { return latents_from_mixing(observed, sys.mixing()); })
                                                : read_stream(a.latent, SeriesKind::Latent);
    const EvalReport rep = evaluate(sys, latent, observed, ck.params, a.threshold);
    const std::string prefix = a.out.empty() ? fs::path(a.checkpoint).replace_extension("").string() + ".eval" : a.out;
    ensure_parent(with_suffix(prefix, ".json"));
    write_file_atomic(with_suffix(prefix, ".json"), report_json(rep, a.threshold));
    write_file_atomic(with_suffix(prefix, ".corr.csv"), matrix_csv(rep.corr));
    write_file_atomic(with_suffix(prefix, ".corr.svg"), svg_heatmap("correlation (true x estimated)", rep.corr));
    std::vector<std::vector<double>> rows;
    for (std::size_t t = 0; t < rep.b_error.size(); ++t)
        rows.push_back({double(t + 1), rep.b_error[t].max_abs, rep.b_error[t].frobenius, rep.b_error[t].f1});
    if (rep.aligned) rows.push_back({0.0, rep.m_error.max_abs, rep.m_error.frobenius, rep.m_error.f1});
    write_file_atomic(with_suffix(prefix, ".errors.csv"), csv_table({"lag", "max_abs", "frobenius", "f1"}, rows));
    if (rep.aligned) {
        MatchResult mr;
        mr.permutation = rep.permutation;
        mr.signed_scale = rep.scaling;
        const AlignedDynamics al = align_dynamics(ck.params, mr);
        write_file_atomic(with_suffix(prefix, ".b_aligned.svg"), svg_heatmap("aligned lag-aggregated B", aggregate_lags(al.b)));
        write_file_atomic(with_suffix(prefix, ".m_aligned.svg"), svg_heatmap("aligned M", al.m));
    }
    out << "mcc=" << format_double(rep.mcc);
    if (rep.aligned) {
        double bmax = 0.0;
        for (const auto& e : rep.b_error) bmax = std::max(bmax, e.max_abs);
        out << " b_max_abs=" << format_double(bmax) << " m_max_abs=" << format_double(rep.m_error.max_abs);
    } else {
        out << " (alignment skipped: zero matched scale)";
    }
    if (!rep.degenerate.empty() || !rep.degenerate_features.empty())
        out << " degenerate=" << rep.degenerate.size() << "/" << rep.degenerate_features.size();
    out << "\nwrote " << with_suffix(prefix, ".json").string() << "\n";
    return 0;
}

int cmd_bench(const BenchArgs& a, std::ostream& out) {
    usage_phase([&] {
        require(a.samples > 0, "--samples must be positive");
        require(!a.dims.empty(), "--dims must list at least one dimension");
        for (int d : a.dims) require(d >= 2, "every dimension must be >= 2");
        require(a.sequences > 0 && a.batch > 0, "--sequences and --batch must be positive");
        return 0;
    });
    const fs::path csv = with_suffix(a.out, ".csv");
    ensure_parent(csv);
    std::vector<std::vector<double>> rows;
    Series mcc_s{"mcc", {}, {}}, time_s{"train seconds", {}, {}};
    for (int d : a.dims) {
        GenSpec spec;
        spec.preset = Preset::Scalable;
        spec.n = d;
        spec.num_sequences = a.sequences;
        spec.seq_len = 2;
        spec.seed = a.seed;
        spec.normalize();
        const GroundTruthSystem sys = make_scalable(d, a.seed);
        const GeneratedData data = generate(sys, spec);
        TrainConfig cfg;
        cfg.lr = a.lr;
        cfg.beta_b = a.beta_b;
        cfg.beta_m = a.beta_m;
        cfg.batch = a.batch;
        cfg.steps = static_cast<int>((a.samples + a.batch - 1) / a.batch);
        cfg.seed = a.seed;
        const auto t0 = std::chrono::steady_clock::now();
        const TrainResult res = train(data.observed, cfg);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const double score = mcc(data.latent, encode_series(data.observed, res.params)).score;
        rows.push_back({double(d), score, secs});
        mcc_s.x.push_back(d), mcc_s.y.push_back(score);
        time_s.x.push_back(d), time_s.y.push_back(secs);
        out << "dim=" << d << " mcc=" << format_double(score) << " wall_seconds=" << format_double(secs) << "\n";
    }
    write_file_atomic(csv, csv_table({"dim", "mcc", "wall_seconds"}, rows));
    write_file_atomic(with_suffix(a.out, ".mcc.svg"), svg_line_plot("MCC vs latent dimension", "dim", "MCC", {mcc_s}));
    write_file_atomic(with_suffix(a.out, ".time.svg"),
                      svg_line_plot("training time vs latent dimension", "dim", "seconds", {time_s}));
    out << "wrote " << csv.string() << "\n";
    return 0;
}

int cmd_relations(const RelArgs& a, std::ostream& out) {
    const Checkpoint ck = read_checkpoint(a.checkpoint);
    const SeriesBatch pos = read_stream(a.pos);
    const SeriesBatch neg = read_stream(a.neg);
    const Checkpoint base = a.baseline_checkpoint.empty() ? ck : read_checkpoint(a.baseline_checkpoint);
    const int tau = a.tau_max > 0 ? a.tau_max : ck.params.tau_max();
    usage_phase([&] {
        require(pos.dim() == neg.dim(), "pos and neg streams differ in dimension");
        require(ck.params.observed_dim() == pos.dim() && base.params.observed_dim() == pos.dim(),
                "checkpoint does not match the stream dimension");
        return 0;
    });

    const Matrix agg = aggregate_lags(ck.params.b_hat);
    const SeriesBatch pos_codes = encode_series(pos, ck.params);
    const SeriesBatch neg_codes = encode_series(neg, ck.params);
    const SeriesBatch base_pos = encode_series(pos, base.params);
    const SeriesBatch base_neg = encode_series(neg, base.params);
    const Matrix base_agg = aggregate_lags(baseline_regression(base_pos, tau));

    nlohmann::json j;
    j["fire_threshold"] = a.fire_threshold;
    j["sigma"] = "population std over all entries of the lag-aggregated matrix";
    std::optional<FeaturePair> pair;
    try {
        pair = contrastive_top_pair(pos_codes, neg_codes, agg, a.fire_threshold);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotFound) throw;
    }
    if (pair) {
        const double ours = relation_recovery_score(agg, pair->i, pair->j);
        j["pair"] = {pair->i, pair->j};
        j["score"] = ours;
        out << "top pair (" << pair->i << ", " << pair->j << ") score=" << format_double(ours) << "\n";
    } else {
        j["pair"] = nullptr;
        j["score"] = nullptr;
        out << "not-found: no feature pair fires on pos while staying quiet on neg\n";
    }
    std::optional<FeaturePair> bpair;
    try {
        bpair = contrastive_top_pair(base_pos, base_neg, base_agg, a.fire_threshold);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::NotFound) throw;
    }
    if (bpair) {
        const double bs = relation_recovery_score(base_agg, bpair->i, bpair->j);
        j["baseline_pair"] = {bpair->i, bpair->j};
        j["baseline_score"] = bs;
        out << "baseline pair (" << bpair->i << ", " << bpair->j << ") score=" << format_double(bs) << "\n";
    } else {
        j["baseline_pair"] = nullptr;
        j["baseline_score"] = nullptr;
    }

    const fs::path csv = with_suffix(a.out, ".top100.csv");
    ensure_parent(csv);
    std::vector<std::vector<double>> rows;
    if (pair)
        for (const auto& r : top_coordinates(agg, 100)) rows.push_back({double(r.i), double(r.j), agg(r.i, r.j), r.score});
    write_file_atomic(csv, csv_table({"i", "j", "value", "score"}, rows));
    write_file_atomic(with_suffix(a.out, ".json"), j.dump(2) + "\n");
    out << "wrote " << csv.string() << "\n";
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Linear temporal causal representation learning toolkit"};
    app.name(args.empty() ? "tcrl" : args.front());
    app.require_subcommand(1);
    app.set_config("--config", "", "TOML/INI file; [train], [gen], ... sections hold flag values, command-line flags win");

    GenArgs g;
    auto* gen = app.add_subcommand("gen", "simulate a latent SEM and write the observed stream plus sidecar");
    gen->add_option("--preset", g.preset, "fixed3 | scalable | custom")
        ->check(CLI::IsMember({"fixed3", "scalable", "custom"}))->capture_default_str();
    gen->add_option("--n", g.n, "latent dimension")->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--m", g.m, "observed dimension (default n)")->check(CLI::PositiveNumber);
    gen->add_option("--sequences", g.sequences, "number of sequences (preset default when omitted)")->check(CLI::PositiveNumber);
    gen->add_option("--seq-len", g.seq_len, "time steps per sequence (preset default when omitted)")->check(CLI::PositiveNumber);
    gen->add_option("--lag", g.lag, "number of lag matrices (custom preset)")->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--sparsity-b", g.sparsity_b, "fraction of nonzero lag entries (custom preset)")->capture_default_str();
    gen->add_option("--chain-weight", g.chain_weight, "sub-diagonal weight of M (custom preset)")->capture_default_str();
    gen->add_option("--noise-scale", g.noise_scale, "Laplace scale (custom preset)")->check(CLI::PositiveNumber)->capture_default_str();
    gen->add_option("--seed", g.seed)->capture_default_str();
    gen->add_option("--out", g.out, "output prefix: <out>.acts and <out>.sidecar")->capture_default_str();
    gen->add_flag("--write-latent", g.latent, "also write <out>.latent.acts");

    TrainArgs t;
    auto* tr = app.add_subcommand("train", "fit the temporal autoencoder to an observed stream");
    tr->add_option("--data", t.data, "observed activation stream")->required()->check(CLI::ExistingFile);
    tr->add_option("--tau-max", t.cfg.tau_max)->check(CLI::PositiveNumber)->capture_default_str();
    tr->add_option("--n-feat", t.cfg.n_feat, "features (default: observed dim)")->check(CLI::NonNegativeNumber);
    tr->add_option("--lr", t.cfg.lr)->check(CLI::PositiveNumber)->capture_default_str();
    tr->add_option("--weight-decay", t.cfg.weight_decay)->check(CLI::NonNegativeNumber)->capture_default_str();
    tr->add_option("--batch", t.cfg.batch)->check(CLI::PositiveNumber)->capture_default_str();
    tr->add_option("--steps", t.cfg.steps)->check(CLI::NonNegativeNumber)->capture_default_str();
    tr->add_option("--alpha", t.cfg.alpha)->check(CLI::NonNegativeNumber)->capture_default_str();
    tr->add_option("--beta-b", t.cfg.beta_b)->check(CLI::NonNegativeNumber)->capture_default_str();
    tr->add_option("--beta-m", t.cfg.beta_m)->check(CLI::NonNegativeNumber)->capture_default_str();
    tr->add_option("--topk", t.cfg.topk)->check(CLI::NonNegativeNumber)->capture_default_str();
    tr->add_option("--restarts", t.cfg.restarts, "independent runs; keeps the best residual fit")
        ->check(CLI::PositiveNumber)->capture_default_str();
    tr->add_flag("--bias", t.cfg.use_bias, "enable encoder/decoder bias vectors");
    tr->add_flag("--free-decoder{false}", t.cfg.unit_decoder, "let decoder column norms float");
    tr->add_option("--seed", t.cfg.seed)->capture_default_str();
    tr->add_option("--threads", t.threads, "worker threads (default: TCRL_THREADS or all cores)")->check(CLI::NonNegativeNumber);
    tr->add_option("--init", t.init, "resume from a checkpoint")->check(CLI::ExistingFile);
    tr->add_option("--out", t.out, "output prefix: <out>.ckpt, <out>.loss.csv, <out>.loss.svg")->capture_default_str();

    EvalArgs e;
    auto* ev = app.add_subcommand("eval", "score a checkpoint against the generating system");
    ev->add_option("--data", e.data, "observed activation stream")->required()->check(CLI::ExistingFile);
    ev->add_option("--sidecar", e.sidecar, "ground-truth sidecar")->required()->check(CLI::ExistingFile);
    ev->add_option("--checkpoint", e.checkpoint)->required()->check(CLI::ExistingFile);
    ev->add_option("--latent", e.latent, "true latent stream (default: solve from the mixing)")->check(CLI::ExistingFile);
    ev->add_option("--threshold", e.threshold, "edge threshold for structure F1")->check(CLI::NonNegativeNumber)->capture_default_str();
    ev->add_option("--out", e.out, "output prefix (default: <checkpoint>.eval)");

    BenchArgs b;
    auto* be = app.add_subcommand("bench", "scaling benchmark on the scalable preset");
    be->add_option("--dims", b.dims, "comma-separated latent dimensions")->delimiter(',')->capture_default_str();
    be->add_option("--samples", b.samples, "training windows per dimension (steps x batch)")->capture_default_str();
    be->add_option("--sequences", b.sequences, "two-step sequences generated per dimension")->capture_default_str();
    be->add_option("--batch", b.batch)->capture_default_str();
    be->add_option("--lr", b.lr)->check(CLI::PositiveNumber)->capture_default_str();
    be->add_option("--beta-b", b.beta_b)->check(CLI::NonNegativeNumber)->capture_default_str();
    be->add_option("--beta-m", b.beta_m)->check(CLI::NonNegativeNumber)->capture_default_str();
    be->add_option("--seed", b.seed)->capture_default_str();
    be->add_option("--out", b.out, "output prefix: <out>.csv, <out>.mcc.svg, <out>.time.svg")->capture_default_str();

    RelArgs r;
    auto* re = app.add_subcommand("relations", "contrastive relation recovery on two activation streams");
    re->add_option("--pos", r.pos, "stream where the concepts fire")->required()->check(CLI::ExistingFile);
    re->add_option("--neg", r.neg, "stream where they stay quiet")->required()->check(CLI::ExistingFile);
    re->add_option("--checkpoint", r.checkpoint)->required()->check(CLI::ExistingFile);
    re->add_option("--baseline-checkpoint", r.baseline_checkpoint,
                   "encoder for the regression baseline (default: --checkpoint)")->check(CLI::ExistingFile);
    re->add_option("--tau-max", r.tau_max, "lags for the regression baseline (default: checkpoint lags)")->check(CLI::NonNegativeNumber);
    re->add_option("--fire-threshold", r.fire_threshold)->capture_default_str();
    re->add_option("--out", r.out, "output prefix: <out>.json, <out>.top100.csv")->capture_default_str();

    // --config belongs to the top-level app but may be written after the subcommand.
    std::vector<std::string> ordered(args.begin(), args.begin() + (args.empty() ? 0 : 1));
    std::vector<std::string> rest;
    for (std::size_t k = 1; k < args.size(); ++k) {
        if (args[k] == "--config" && k + 1 < args.size()) {
            ordered.push_back(args[k]);
            ordered.push_back(args[++k]);
        } else if (args[k].rfind("--config=", 0) == 0) {
            ordered.push_back(args[k]);
        } else {
            rest.push_back(args[k]);
        }
    }
    ordered.insert(ordered.end(), rest.begin(), rest.end());
    std::vector<const char*> argv;
    for (const auto& s : ordered) argv.push_back(s.c_str());
    if (argv.empty()) argv.push_back("tcrl");
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::Success& s) {
        return app.exit(s, out, err);
    } catch (const CLI::ParseError& pe) {
        app.exit(pe, out, err);
        return 2;
    }

    try {
        if (*gen) return cmd_gen(g, out);
        if (*tr) return cmd_train(t, out);
        if (*ev) return cmd_eval(e, out);
        if (*be) return cmd_bench(b, out);
        if (*re) return cmd_relations(r, out);
    } catch (const UsageError& u) {
        err << "usage error: " << u.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        err << "error: " << ex.what() << "\n";
        return 1;
    }
    return 2;
}

int run(int argc, char** argv) { return run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr); }

}  // namespace tcrl::cli
