// Command-line front end: reference samplers, boundary-condition MCMC,
// estimators, and the statistical verification suites.  Every artifact is a
// pure function of (config, seed, code version); the code version and a hash
// of the resolved config are stamped into each output stream.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "loopsoup/loopsoup.hpp"

namespace fs = std::filesystem;
using namespace loopsoup;

namespace {

struct CliOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<long> replicas;
    long samples = 0; // 0 = subcommand default
    std::string kind = "dir";
    std::string boundary;
    std::string suite;
    std::vector<int> j_list;
    double c_exp = 0.25;
    int gn_n = 4;
};

RunConfig load_cli_config(const CliOptions& o) {
    std::string text;
    if (!o.config_path.empty()) {
        std::ifstream in(o.config_path, std::ios::binary);
        if (!in) throw config_error("cannot open config file: " + o.config_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        text = buf.str();
    }
    RunConfig cfg = load_run_config(text);
    if (o.seed) cfg.seed = *o.seed;
    if (o.out) cfg.out_dir = *o.out;
    if (o.replicas) cfg.replicas = static_cast<std::uint32_t>(*o.replicas);
    if (cfg.out_dir.empty()) cfg.out_dir = "out";
    return cfg;
}

// Writes config.resolved and returns its hash for record headers.
std::string emit_resolved(const RunConfig& cfg) {
    fs::create_directories(cfg.out_dir);
    const std::string text = resolved_text(cfg);
    std::ofstream out(fs::path(cfg.out_dir) / "config.resolved", std::ios::binary);
    out << text;
    return fnv1a_hex(text);
}

template <int D> Box<D> config_box(const RunConfig& c) {
    if (c.side > 0) return centered_cube<D>(c.side);
    Box<D> b;
    for (int i = 0; i < D; ++i) {
        b.lower[i] = c.lower[static_cast<std::size_t>(i)];
        b.upper[i] = c.upper[static_cast<std::size_t>(i)];
    }
    return b;
}

KernelKind parse_kind(const std::string& s) {
    if (s == "dir") return KernelKind::dirichlet;
    if (s == "free") return KernelKind::free_bc;
    if (s == "exc") return KernelKind::excursion;
    throw config_error("--kernel/--kind: expected dir, free or exc, got '" + s + "'");
}

template <int D>
ObservableRecord observe(long step, const Configuration<D>& c, const Box<D>& box,
                         const Potential& pot, const TimeGrid& g, const PsiSpec& psi) {
    ObservableRecord r;
    r.step = step;
    r.n_loops = static_cast<long>(c.loops.size());
    r.n_particles = static_cast<double>(particle_count(c, box));
    r.max_diam = max_diameter(c, box);
    r.n_psi = psi_sum(c, box, psi);
    const EnergyBreakdown eb = hamiltonian(c, box, pot, g);
    r.e_self = eb.self;
    r.e_pair = eb.pair_internal;
    r.e_bnd = eb.pair_boundary;
    return r;
}

// Runs one task per replica on its own thread; each replica owns its output
// file, so every sink has a single writer.
void for_each_replica(std::uint32_t replicas, const std::function<void(std::uint32_t)>& task) {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(replicas);
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    for (std::uint32_t r0 = 0; r0 < replicas; r0 += hw) {
        const std::uint32_t r1 = std::min(replicas, r0 + hw);
        for (std::uint32_t r = r0; r < r1; ++r)
            pool.emplace_back([&, r] {
                try {
                    task(r);
                } catch (...) {
                    errors[r] = std::current_exception();
                }
            });
        for (auto& t : pool) t.join();
        pool.clear();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

// --- subcommands -----------------------------------------------------------

template <int D> int cmd_sample(const RunConfig& cfg, const CliOptions& o, bool dirichlet) {
    const std::string hash = emit_resolved(cfg);
    const Box<D> box = config_box<D>(cfg);
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    const PsiSpec psi = parse_psi(cfg.psi);
    const auto spec = make_measure_spec<D>(box, g, cfg.mu, cfg.j_max, cfg.tail_tol, cfg.cphi_hat);
    const long n = o.samples > 0 ? o.samples : 1000;
    for_each_replica(cfg.replicas, [&](std::uint32_t r) {
        Philox rng(cfg.seed, r, StreamPurpose::measure);
        RecordWriter w((fs::path(cfg.out_dir) / ("samples.r" + std::to_string(r) + ".jsonl"))
                           .string(),
                       hash, dirichlet ? "sample-dirichlet" : "sample-free");
        for (long i = 0; i < n; ++i) {
            const Configuration<D> c =
                dirichlet ? sample_dirichlet(spec, rng) : sample_free(spec, rng);
            w.write(observe(i, c, box, pot, g, psi));
        }
    });
    std::cout << "wrote " << cfg.replicas << " x " << n << " "
              << (dirichlet ? "dirichlet" : "free") << " reference samples to " << cfg.out_dir
              << "\n";
    return exit_ok;
}

template <int D> int cmd_mcmc(const RunConfig& cfg, const CliOptions& o) {
    const std::string hash = emit_resolved(cfg);
    const Box<D> box = config_box<D>(cfg);
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    const PsiSpec psi = parse_psi(cfg.psi);
    const KernelKind kind = parse_kind(o.kind);
    const auto spec = make_measure_spec<D>(box, g, cfg.mu, cfg.j_max, cfg.tail_tol, cfg.cphi_hat);

    Configuration<D> conditioning;
    if (!o.boundary.empty()) {
        auto [c, bg] = load_snapshot<D>(o.boundary);
        if (bg.steps_per_beta != g.steps_per_beta || bg.beta != g.beta)
            throw config_error("--boundary: snapshot grid differs from the configured grid");
        conditioning = std::move(c);
    }

    for_each_replica(cfg.replicas, [&](std::uint32_t r) {
        RecordWriter w(
            (fs::path(cfg.out_dir) / ("obs.r" + std::to_string(r) + ".jsonl")).string(), hash,
            "mcmc-" + o.kind);
        Configuration<D> last;
        const KernelRunReport rep = run_kernel<D>(
            kind, spec, pot, conditioning, cfg.mcmc, Philox(cfg.seed, r, StreamPurpose::chain),
            [&](long step, const Chain<D>& chain) {
                const Configuration<D> c = chain.configuration();
                ObservableRecord rec = observe(step, c, box, pot, g, psi);
                const EnergyBreakdown eb = chain.breakdown();
                rec.e_self = eb.self;
                rec.e_pair = eb.pair_internal;
                rec.e_bnd = eb.pair_boundary;
                const Tallies& t = chain.tallies();
                rec.acc_birth = t.rate(MoveKind::birth);
                rec.acc_death = t.rate(MoveKind::death);
                rec.acc_rebridge = t.rate(MoveKind::rebridge);
                rec.acc_exc = t.rate(MoveKind::exc_rebridge);
                w.write(rec);
                if (cfg.snapshots) last = c;
            });
        if (cfg.snapshots) {
            // size cap: skip snapshots whose coordinate payload would be huge
            std::size_t pts = 0;
            for (const auto& wl : last.loops) pts += wl.points.size();
            if (pts * D <= (1u << 22)) {
                save_snapshot((fs::path(cfg.out_dir) / ("snapshot.r" + std::to_string(r) + ".txt"))
                                  .string(),
                              last, g);
            } else {
                std::cerr << "replica " << r << ": snapshot skipped (too large)\n";
            }
        }
        std::ostringstream line;
        line << "replica " << r << ": retained " << rep.retained << " samples, acceptance "
             << rep.tallies.rate(MoveKind::birth) << "/" << rep.tallies.rate(MoveKind::death)
             << "/" << rep.tallies.rate(MoveKind::rebridge) << "/"
             << rep.tallies.rate(MoveKind::exc_rebridge) << " (b/d/r/e), final energy "
             << rep.final_energy << "\n";
        std::cout << line.str();
    });
    return exit_ok;
}

template <int D> int cmd_estimate_z(const RunConfig& cfg, const CliOptions& o) {
    const std::string hash = emit_resolved(cfg);
    const Box<D> box = config_box<D>(cfg);
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    const KernelKind kind = parse_kind(o.kind);
    const auto spec = make_measure_spec<D>(box, g, cfg.mu, cfg.j_max, cfg.tail_tol, cfg.cphi_hat);
    Configuration<D> conditioning;
    if (!o.boundary.empty()) conditioning = load_snapshot<D>(o.boundary).first;
    const long n = o.samples > 0 ? o.samples : 20000;
    Philox rng(cfg.seed, 0, StreamPurpose::verify);
    const ZEstimate z = estimate_z<D>(kind, spec, pot, conditioning, n, rng);
    RecordWriter w((fs::path(cfg.out_dir) / "estimates.jsonl").string(), hash, "estimate-z");
    w.write_json(nlohmann::json{{"quantity", "partition_function"},
                                {"kind", o.kind},
                                {"value", z.z},
                                {"se", z.se},
                                {"n", z.n},
                                {"frac_finite", z.frac_finite}});
    std::cout << "Z(" << o.kind << ") = " << z.z << " +- " << z.se << "  (n = " << z.n
              << ", finite fraction " << z.frac_finite << ")\n";
    return exit_ok;
}

template <int D> int cmd_estimate_cphi(const RunConfig& cfg, const CliOptions& o) {
    const std::string hash = emit_resolved(cfg);
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    const long n = o.samples > 0 ? o.samples : 200000;
    Philox rng(cfg.seed, 0, StreamPurpose::verify);
    const CphiBound b = estimate_cphi_bound<D>(g, pot, n, rng);
    RecordWriter w((fs::path(cfg.out_dir) / "estimates.jsonl").string(), hash, "estimate-cphi");
    w.write_json(nlohmann::json{{"quantity", "cphi_bound"},
                                {"lambda_hat", b.lambda_hat},
                                {"bound", b.bound},
                                {"se", b.se},
                                {"n", b.n}});
    std::cout << "lambda_hat = " << b.lambda_hat << ", certified decay bound cphi_hat = "
              << b.bound << " +- " << b.se << "  (n = " << b.n << ")\n";
    std::cout << "use [measure] cphi_hat = " << b.bound
              << " to certify truncation levels against this interaction\n";
    return exit_ok;
}

template <int D> int cmd_decay_fit(const RunConfig& cfg, const CliOptions& o) {
    const std::string hash = emit_resolved(cfg);
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    std::vector<int> js = o.j_list;
    if (js.empty()) js = {1, 2, 3, 4, 6, 8, 12, 16, 20, 24};
    Philox rng(cfg.seed, 0, StreamPurpose::verify);
    const long pilot = o.samples > 0 ? o.samples : 2000;
    const DecayFit fit = fit_single_loop_decay<D>(js, g, pot, pilot, 400000, rng);
    RecordWriter w((fs::path(cfg.out_dir) / "estimates.jsonl").string(), hash, "decay-fit");
    for (const auto& we : fit.weights) {
        w.write_json(nlohmann::json{
            {"quantity", "single_loop_weight"}, {"j", we.j}, {"value", we.value},
            {"se", we.se},                      {"n", we.n}});
        std::cout << "q(" << we.j << ") = " << we.value << " +- " << we.se << "\n";
    }
    w.write_json(nlohmann::json{{"quantity", "decay_rate"},
                                {"rate", fit.rate},
                                {"se", fit.rate_se},
                                {"log_decreasing", fit.log_decreasing}});
    std::cout << "decay rate = " << fit.rate << " +- " << fit.rate_se
              << (fit.log_decreasing ? "  (log-weights strictly decreasing)\n"
                                     : "  (log-weights NOT monotone)\n");
    if (cfg.cphi_hat)
        std::cout << "configured cphi_hat = " << *cfg.cphi_hat << " (rate should dominate it)\n";
    return exit_ok;
}

template <int D> int cmd_gn_sample(const RunConfig& cfg, const CliOptions& o) {
    emit_resolved(cfg);
    const Box<D> box = config_box<D>(cfg);
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    GnParams gp;
    gp.n = o.gn_n;
    gp.seed = cfg.seed;
    gp.replica = 0;
    const GnSample<D> s =
        sample_gn<D>(box, gp, g, cfg.mu, pot, cfg.j_max, cfg.tail_tol, cfg.mcmc, cfg.cphi_hat);
    save_snapshot((fs::path(cfg.out_dir) / "gn_snapshot.txt").string(), s.loops, g);
    std::cout << "tiled finite-volume sample: n = " << gp.n << ", tiles = " << s.tiles
              << ", loops kept = " << s.loops.loops.size() << ", written to gn_snapshot.txt\n";
    return exit_ok;
}

// --- verification suites ---------------------------------------------------

struct SuiteResult {
    std::vector<Verdict> verdicts;
    bool pass = true;

    void add(const std::string& suite, const std::string& name, bool ok, nlohmann::json detail) {
        pass = pass && ok;
        std::cout << "  [" << (ok ? "PASS" : "FAIL") << "] " << name << "  " << detail.dump()
                  << "\n";
        verdicts.push_back({suite, name, ok, std::move(detail)});
    }
};

template <int D> void suite_free_gas(const RunConfig& cfg, SuiteResult& out) {
    // interaction off: the free-boundary chain must reproduce the ideal loop
    // gas, whose mean particle number is known in closed form
    const Box<D> box = config_box<D>(cfg);
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = Potential::zero();
    const auto spec = make_measure_spec<D>(box, g, cfg.mu, cfg.j_max, cfg.tail_tol);

    McmcConfig mc = cfg.mcmc;
    std::vector<double> ns;
    run_kernel<D>(KernelKind::free_bc, spec, pot, Configuration<D>{}, mc,
                  Philox(cfg.seed, 0, StreamPurpose::chain), [&](long, const Chain<D>& ch) {
                      ns.push_back(
                          static_cast<double>(particle_count(ch.configuration(), box)));
                  });
    const double want = expected_particles(spec);
    const double got = mean_of(ns);
    const double se = batch_means_se(ns);
    const bool mean_ok = std::abs(got - want) <= 3 * se;
    out.add("free-gas", "mean particle number (free kernel)", mean_ok,
            {{"expected", want}, {"observed", got}, {"se", se}});

    // distribution check: N under the free field is compound Poisson with
    // atom sizes j and rates volume * w_j; everything above the largest
    // observed count is lumped into one overflow cell on both sides
    std::vector<double> rates(static_cast<std::size_t>(spec.j_max));
    for (int j = 1; j <= spec.j_max; ++j)
        rates[static_cast<std::size_t>(j - 1)] =
            spec.volume() * spec.weights[static_cast<std::size_t>(j - 1)];
    long n_max = 0;
    for (double v : ns) n_max = std::max(n_max, static_cast<long>(v));
    std::vector<double> hist(static_cast<std::size_t>(n_max) + 2, 0.0);
    for (double v : ns) hist[static_cast<std::size_t>(v)] += 1.0;
    std::vector<double> probs = compound_poisson_pmf(rates, n_max);
    double tail = 1.0;
    for (double q : probs) tail -= q;
    probs.push_back(std::max(tail, 0.0));
    const Chi2Result chi = chi2_goodness(hist, probs);
    out.add("free-gas", "particle count distribution", chi.p >= 0.01,
            {{"p", chi.p}, {"dof", chi.dof}});
}

template <int D> void suite_fkg(const RunConfig& cfg, SuiteResult& out) {
    // stochastic domination: the interacting Dirichlet field has no more
    // particles than the self-weighted reference it is thinned from
    const Box<D> box = config_box<D>(cfg);
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    const auto spec = make_measure_spec<D>(box, g, cfg.mu, cfg.j_max, cfg.tail_tol, cfg.cphi_hat);

    std::vector<double> dir_ns;
    run_kernel<D>(KernelKind::dirichlet, spec, pot, Configuration<D>{}, cfg.mcmc,
                  Philox(cfg.seed, 0, StreamPurpose::chain), [&](long, const Chain<D>& ch) {
                      dir_ns.push_back(
                          static_cast<double>(particle_count(ch.configuration(), box)));
                  });
    Philox ref(cfg.seed, 1, StreamPurpose::measure);
    RunningStat ph;
    const long n_ref = std::max<long>(2000, static_cast<long>(dir_ns.size()));
    for (long i = 0; i < n_ref; ++i)
        ph.add(static_cast<double>(particle_count(sample_ph(spec, pot, ref), box)));
    const double se = std::sqrt(batch_means_se(dir_ns) * batch_means_se(dir_ns) +
                                ph.se() * ph.se());
    const bool ok = mean_of(dir_ns) <= ph.mean() + 3 * se;
    out.add("fkg", "dirichlet mean below weighted-reference mean", ok,
            {{"dirichlet", mean_of(dir_ns)}, {"reference", ph.mean()}, {"se", se}});
}

template <int D> void suite_consistency(const RunConfig& cfg, SuiteResult& out) {
    const Box<D> outer = config_box<D>(cfg);
    Box<D> inner = outer;
    for (int i = 0; i < D; ++i) {
        const double w = outer.upper[i] - outer.lower[i];
        inner.lower[i] = outer.lower[i] + w / 3;
        inner.upper[i] = outer.upper[i] - w / 3;
    }
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    ConsistencyParams p;
    p.outer = cfg.mcmc;
    p.inner = cfg.mcmc;
    p.inner.burnin = std::max<long>(2000, cfg.mcmc.burnin / 4);
    for (bool gamma : {false, true}) {
        p.gamma_variant = gamma;
        const ConsistencyReport r = consistency_test<D>(outer, inner, g, cfg.mu, pot, cfg.j_max,
                                                        cfg.tail_tol, p, cfg.seed + (gamma ? 1 : 0));
        out.add("consistency",
                gamma ? "nested excursion kernel (non-crossing samples)"
                      : "nested dirichlet kernel",
                r.cmp.pass,
                {{"pairs", r.cmp.pairs},
                 {"p_count", r.cmp.t_p_count},
                 {"p_diam", r.cmp.t_p_diam},
                 {"p_energy", r.cmp.t_p_energy},
                 {"p_chi2", r.cmp.chi2_count.p},
                 {"p_ks", r.cmp.ks_p_diam}});
    }
}

template <int D> void suite_tails(const RunConfig& cfg, SuiteResult& out) {
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    Philox rng(cfg.seed, 0, StreamPurpose::verify);
    const long n = 30000;
    for (int j : {1, 4, 16}) {
        const DiameterTailReport r = diameter_tail_test<D>(j, g, n, rng);
        out.add("tails", "diameter tail rate, j = " + std::to_string(j), r.pass,
                {{"rate", r.rate_hat},
                 {"rate_se", r.rate_se},
                 {"required", r.required_rate},
                 {"monotone", r.monotone}});
    }
}

template <int D> void suite_tempered(const RunConfig& cfg, SuiteResult& out) {
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    TemperedSpec ts;
    ts.alpha = 0.5;
    ts.n_max = 4;
    const Box<D> window = centered_cube<D>(static_cast<double>(ts.n_max));
    const auto spec = make_measure_spec<D>(window, g, cfg.mu, cfg.j_max, cfg.tail_tol,
                                           cfg.cphi_hat);

    // calibrate (K, L) on the dominating weighted reference at the 99.5% level
    Philox ref(cfg.seed, 0, StreamPurpose::measure);
    const long n_cal = 4000;
    std::vector<double> need_k, need_l;
    for (long i = 0; i < n_cal; ++i) {
        const Configuration<D> c = sample_ph(spec, pot, ref);
        double mk = 0, ml = -std::numeric_limits<double>::infinity();
        for (int n = 1; n <= ts.n_max; ++n) {
            const Box<D> bn = centered_cube<D>(static_cast<double>(n));
            mk = std::max(mk, static_cast<double>(particle_count(c, bn)) /
                                  std::pow(static_cast<double>(n), D));
            ml = std::max(ml, max_diameter(c, bn) - std::pow(static_cast<double>(n), ts.alpha));
        }
        need_k.push_back(mk);
        need_l.push_back(std::max(ml, 0.0));
    }
    std::sort(need_k.begin(), need_k.end());
    std::sort(need_l.begin(), need_l.end());
    const auto q995 = [](const std::vector<double>& v) {
        return v[static_cast<std::size_t>(0.995 * static_cast<double>(v.size() - 1))];
    };
    ts.K = std::ceil(q995(need_k)) + 1;
    ts.L = q995(need_l) + 0.5;
    std::cout << "  calibrated K = " << ts.K << ", L = " << ts.L << " (alpha = 1/2)\n";

    // the tiled finite-volume samples must then be tempered almost always
    McmcConfig mc = cfg.mcmc;
    mc.steps = std::min<long>(mc.steps, 4000);
    mc.burnin = std::min<long>(mc.burnin, 2000);
    for (int n = 1; n <= ts.n_max; ++n) {
        GnParams gp;
        gp.n = n;
        gp.seed = cfg.seed;
        long passed = 0;
        const long draws = 200;
        for (long i = 0; i < draws; ++i) {
            gp.replica = static_cast<std::uint32_t>(i + 1);
            const GnSample<D> s =
                sample_gn<D>(window, gp, g, cfg.mu, pot, cfg.j_max, cfg.tail_tol, mc, cfg.cphi_hat);
            if (tempered_membership(s.loops, ts).member) ++passed;
        }
        const double rate = static_cast<double>(passed) / static_cast<double>(draws);
        out.add("tempered", "tiled sample membership, tile side " + std::to_string(n),
                rate >= 0.99, {{"rate", rate}, {"K", ts.K}, {"L", ts.L}});
    }
}

template <int D> void suite_exp_moment(const RunConfig& cfg, SuiteResult& out) {
    const Box<D> box = config_box<D>(cfg);
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    const auto spec = make_measure_spec<D>(box, g, cfg.mu, cfg.j_max, cfg.tail_tol, cfg.cphi_hat);

    std::vector<double> ns;
    run_kernel<D>(KernelKind::dirichlet, spec, pot, Configuration<D>{}, cfg.mcmc,
                  Philox(cfg.seed, 0, StreamPurpose::chain), [&](long, const Chain<D>& ch) {
                      ns.push_back(
                          static_cast<double>(particle_count(ch.configuration(), box)));
                  });
    Philox rng(cfg.seed, 1, StreamPurpose::verify);
    std::vector<WeightEstimate> weights;
    for (int j = 1; j <= spec.j_max; ++j)
        weights.push_back(single_loop_weight<D>(j, g, pot, 20000, rng));
    const ExpMomentReport r = exp_moment_test<D>(ns, 0.25, spec, weights);
    out.add("exp-moment", "exp(cN) dominated by weighted-reference moment", r.pass,
            {{"c", r.c},
             {"empirical", r.empirical},
             {"empirical_se", r.empirical_se},
             {"bound", r.bound},
             {"bound_se", r.bound_se}});
}

template <int D> void suite_kernel_equiv(const RunConfig& cfg, SuiteResult& out) {
    const Box<D> outer = config_box<D>(cfg);
    Box<D> inner = outer;
    for (int i = 0; i < D; ++i) {
        const double w = outer.upper[i] - outer.lower[i];
        inner.lower[i] = outer.lower[i] + w / 3;
        inner.upper[i] = outer.upper[i] - w / 3;
    }
    const TimeGrid g = make_time_grid(cfg.beta, cfg.m);
    const Potential pot = make_potential(cfg.potential);
    ConsistencyParams p;
    p.outer = cfg.mcmc;
    p.inner = cfg.mcmc;
    p.inner.burnin = std::max<long>(2000, cfg.mcmc.burnin / 4);
    const KernelEquivReport r = kernel_equiv_test<D>(outer, inner, g, cfg.mu, pot, cfg.j_max,
                                                     cfg.tail_tol, p, cfg.seed);
    out.add("kernel-equiv", "excursion kernel preserves the nested law", r.vs_excursion.pass,
            {{"p_count", r.vs_excursion.t_p_count},
             {"p_chi2", r.vs_excursion.chi2_count.p},
             {"p_ks", r.vs_excursion.ks_p_diam}});
    out.add("kernel-equiv", "free kernel preserves the nested law", r.vs_free.pass,
            {{"p_count", r.vs_free.t_p_count},
             {"p_chi2", r.vs_free.chi2_count.p},
             {"p_ks", r.vs_free.ks_p_diam}});
}

template <int D> int cmd_verify(const RunConfig& cfg, const CliOptions& o) {
    const std::string hash = emit_resolved(cfg);
    SuiteResult res;
    std::cout << "suite " << o.suite << ":\n";
    if (o.suite == "free-gas")
        suite_free_gas<D>(cfg, res);
    else if (o.suite == "fkg")
        suite_fkg<D>(cfg, res);
    else if (o.suite == "consistency")
        suite_consistency<D>(cfg, res);
    else if (o.suite == "tails")
        suite_tails<D>(cfg, res);
    else if (o.suite == "tempered")
        suite_tempered<D>(cfg, res);
    else if (o.suite == "exp-moment")
        suite_exp_moment<D>(cfg, res);
    else if (o.suite == "kernel-equiv")
        suite_kernel_equiv<D>(cfg, res);
    else
        throw config_error("--suite: unknown suite '" + o.suite + "'");
    RecordWriter w((fs::path(cfg.out_dir) / "verdicts.jsonl").string(), hash, "verify");
    for (const auto& v : res.verdicts) w.write_json(to_json(v));
    std::cout << (res.pass ? "suite PASSED\n" : "suite FAILED\n");
    return res.pass ? exit_ok : exit_statistical_failure;
}

enum class Action {
    sample_free,
    sample_dirichlet,
    mcmc,
    estimate_z,
    estimate_cphi,
    decay_fit,
    verify,
    gn_sample
};

template <int D> int dispatch(Action a, const RunConfig& cfg, const CliOptions& o) {
    switch (a) {
    case Action::sample_free: return cmd_sample<D>(cfg, o, false);
    case Action::sample_dirichlet: return cmd_sample<D>(cfg, o, true);
    case Action::mcmc: return cmd_mcmc<D>(cfg, o);
    case Action::estimate_z: return cmd_estimate_z<D>(cfg, o);
    case Action::estimate_cphi: return cmd_estimate_cphi<D>(cfg, o);
    case Action::decay_fit: return cmd_decay_fit<D>(cfg, o);
    case Action::verify: return cmd_verify<D>(cfg, o);
    case Action::gn_sample: return cmd_gn_sample<D>(cfg, o);
    }
    return exit_runtime_failure;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{std::string(k_version) +
                 " - loop-soup sampling for the repulsive Bose gas"};
    app.require_subcommand(1);
    CliOptions o;

    auto add_common = [&](CLI::App* s) {
        s->add_option("--config", o.config_path, "configuration file (sectioned key = value)");
        s->add_option("--seed", o.seed, "override [run] seed");
        s->add_option("--out", o.out, "override [run] out directory");
        s->add_option("--replicas", o.replicas, "override [run] replicas");
        return s;
    };

    auto* sfree = add_common(app.add_subcommand("sample-free", "draw free reference samples"));
    sfree->add_option("--samples", o.samples, "draws per replica (default 1000)");
    auto* sdir =
        add_common(app.add_subcommand("sample-dirichlet", "draw contained reference samples"));
    sdir->add_option("--samples", o.samples, "draws per replica (default 1000)");

    auto* mc = add_common(app.add_subcommand("mcmc", "run a boundary-condition Markov chain"));
    mc->add_option("--kernel", o.kind, "dir | free | exc")->default_val("dir");
    mc->add_option("--boundary", o.boundary, "snapshot file with the conditioning loops");

    auto* ez = add_common(app.add_subcommand("estimate-z", "partition function by direct MC"));
    ez->add_option("--kind", o.kind, "dir | free | exc")->default_val("dir");
    ez->add_option("--samples", o.samples, "MC draws (default 20000)");
    ez->add_option("--boundary", o.boundary, "snapshot file with the conditioning loops");

    auto* ec = add_common(
        app.add_subcommand("estimate-cphi", "certified single-loop decay-rate bound"));
    ec->add_option("--samples", o.samples, "MC draws (default 200000)");

    auto* df = add_common(
        app.add_subcommand("decay-fit", "single-loop weights and their decay rate"));
    df->add_option("--j-list", o.j_list, "loop sizes to estimate");
    df->add_option("--samples", o.samples, "pilot draws per size (default 2000)");

    auto* vf = add_common(app.add_subcommand("verify", "statistical verification suites"));
    vf->add_option("--suite", o.suite,
                   "free-gas | consistency | fkg | tails | tempered | exp-moment | kernel-equiv")
        ->required();

    auto* gn = add_common(
        app.add_subcommand("gn-sample", "tiled finite-volume sample on a random shifted grid"));
    gn->add_option("--n", o.gn_n, "tile side length (default 4)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_config_error;
    }

    Action a{};
    if (sfree->parsed()) a = Action::sample_free;
    else if (sdir->parsed()) a = Action::sample_dirichlet;
    else if (mc->parsed()) a = Action::mcmc;
    else if (ez->parsed()) a = Action::estimate_z;
    else if (ec->parsed()) a = Action::estimate_cphi;
    else if (df->parsed()) a = Action::decay_fit;
    else if (vf->parsed()) a = Action::verify;
    else if (gn->parsed()) a = Action::gn_sample;

    try {
        const RunConfig cfg = load_cli_config(o);
        return cfg.d == 3 ? dispatch<3>(a, cfg, o) : dispatch<4>(a, cfg, o);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const std::exception& e) {
        std::cerr << "runtime failure: " << e.what() << "\n";
        return exit_runtime_failure;
    }
}
