// Acceptance gate: one binary, one verdict line per criterion, tolerances
// pinned in the code next to each check.  Exit status is the number of
// enforced criteria that failed; line 01a is reported but not enforced (see
// the note it prints).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "loopsoup/loopsoup.hpp"
#include "oracles.hpp"

using namespace loopsoup;

namespace {

// ---------------------------------------------------------------------------
// reporting

int g_failed = 0;
int g_enforced = 0;

bool report(const std::string& id, const std::string& name, bool pass, const std::string& detail,
            bool enforced = true) {
    std::ostringstream line;
    line << "[criterion " << id << "] " << std::left << std::setw(48) << name << " "
         << (pass ? "PASS" : (enforced ? "FAIL" : "FAIL (expected)"));
    if (!detail.empty()) line << "  " << detail;
    std::cout << line.str() << "\n" << std::flush;
    if (enforced) {
        ++g_enforced;
        if (!pass) ++g_failed;
    }
    return pass;
}

void note(const std::string& text) {
    std::cout << "    note: " << text << "\n" << std::flush;
}

std::string fmt(double v, int prec = 5) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

// Closed forms frozen to 20 digits, beta = 1, D = 3:
//   per-volume loop mass   (2 pi)^{-3/2} zeta(5/2)
//   per-volume mean count  (2 pi)^{-3/2} zeta(3/2)
constexpr double k_mass_per_volume = 0.085175903522313194996;
constexpr double k_mean_per_volume = 0.16586920931302220585;

// ---------------------------------------------------------------------------
// small helpers shared by several criteria

std::vector<double> count_histogram(const std::vector<double>& ns, int kmax) {
    std::vector<double> h(static_cast<std::size_t>(kmax) + 1, 0.0);
    for (double v : ns) {
        long k = std::lround(v);
        if (k < 0) k = 0;
        if (k > kmax) k = kmax; // overflow lumped into the last cell
        h[static_cast<std::size_t>(k)] += 1.0;
    }
    return h;
}

// Compound-Poisson count probabilities with the whole upper tail lumped into
// the last cell, matching count_histogram's overflow convention.
std::vector<double> lumped_count_probs(const std::vector<double>& lam, int kmax) {
    std::vector<double> p = compound_poisson_pmf(lam, kmax);
    double below = 0;
    for (int k = 0; k < kmax; ++k) below += p[static_cast<std::size_t>(k)];
    p[static_cast<std::size_t>(kmax)] = std::max(0.0, 1.0 - below);
    return p;
}

double quantile_of(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    long idx = static_cast<long>(std::ceil(q * n)) - 1;
    idx = std::clamp(idx, 0L, static_cast<long>(v.size()) - 1);
    return v[static_cast<std::size_t>(idx)];
}

// Longest cyclic run of strictly interior points, used to make sure a
// crossing conditioning loop actually carries a rebridgeable excursion.
int longest_interior_run(const Loop<3>& w, const Box<3>& box) {
    const int n = w.steps();
    int best = 0, cur = 0;
    for (int k = 0; k < 2 * n; ++k) {
        const Vec<3>& p = w.position(k);
        bool inside = true;
        for (int i = 0; i < 3; ++i)
            inside = inside && p[i] > box.lower[i] && p[i] < box.upper[i];
        if (inside) {
            ++cur;
            best = std::max(best, std::min(cur, n));
        } else {
            cur = 0;
        }
    }
    return best;
}

// Conditioning with all three placements relative to [0,2]^3: a started-in
// crossing loop with a usable excursion, a started-out crossing loop, and a
// fully outside loop.
Configuration<3> mixed_conditioning(const Box<3>& box, const TimeGrid& g, std::uint64_t seed) {
    Philox rng(seed, 0, StreamPurpose::paths);
    Configuration<3> cond;
    for (int attempt = 0; attempt < 4000; ++attempt) {
        Loop<3> w = sample_loop(Vec<3>{0.15, 1.0, 1.0}, 2, g, rng);
        if (placement(w, box) == Placement::crossing && longest_interior_run(w, box) >= 3) {
            cond.loops.push_back(std::move(w));
            break;
        }
    }
    for (int attempt = 0; attempt < 4000; ++attempt) {
        Loop<3> w = sample_loop(Vec<3>{-0.15, 1.0, 1.0}, 2, g, rng);
        if (placement(w, box) == Placement::crossing && longest_interior_run(w, box) >= 3) {
            cond.loops.push_back(std::move(w));
            break;
        }
    }
    for (int attempt = 0; attempt < 4000; ++attempt) {
        Loop<3> w = sample_loop(Vec<3>{3.2, 3.2, 3.2}, 1, g, rng);
        if (placement(w, box) == Placement::outside) {
            cond.loops.push_back(std::move(w));
            break;
        }
    }
    if (cond.loops.size() != 3) throw std::runtime_error("mixed_conditioning: rejection cap hit");
    return cond;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

// ---------------------------------------------------------------------------
// 01: ideal-gas mean count and count law on [0,2]^3 at beta = 1, mu = 0

void criterion_01() {
    const Box<3> box = make_box<3>(Vec<3>{0, 0, 0}, Vec<3>{2, 2, 2});
    const TimeGrid g = make_time_grid(1.0, 16);
    const Potential none = Potential::zero();
    const double mean_closed = 8.0 * k_mean_per_volume; // 1.3269536745041776

    McmcConfig cfg;
    cfg.steps = 500000;
    cfg.burnin = 20000;
    cfg.thinning = 50;

    // (a) literal form: the zero-boundary kernel's own mean against the
    // all-loops closed form.  The kernel keeps only box-contained loops, so
    // its stationary count sits strictly below the closed form; reported for
    // the record, not enforced.
    const auto spec64 = make_measure_spec(box, g, 0.0, 64, 1e-3);
    std::vector<double> dir_ns;
    dir_ns.reserve(static_cast<std::size_t>(cfg.steps / cfg.thinning));
    run_kernel<3>(KernelKind::dirichlet, spec64, none, Configuration<3>{}, cfg,
                  Philox(1001, 0, StreamPurpose::chain), [&](long, const Chain<3>& c) {
                      dir_ns.push_back(
                          static_cast<double>(particle_count(c.configuration(), box)));
                  });
    const double dir_mean = mean_of(dir_ns);
    const double dir_se = batch_means_se(dir_ns);
    const bool lit_mean_ok = std::abs(dir_mean - mean_closed) <= 3.0 * dir_se;

    std::vector<double> lam64(spec64.weights.size());
    for (std::size_t i = 0; i < lam64.size(); ++i) lam64[i] = spec64.volume() * spec64.weights[i];
    const Chi2Result lit_chi2 =
        chi2_goodness(count_histogram(dir_ns, 24), lumped_count_probs(lam64, 24));
    report("01a", "ideal gas, zero-boundary kernel, literal form",
           lit_mean_ok && lit_chi2.p >= 0.01,
           "mean " + fmt(dir_mean) + " +- " + fmt(dir_se, 3) + " vs " + fmt(mean_closed, 8) +
               ", count-law p " + fmt(lit_chi2.p, 3),
           /*enforced=*/false);
    note("not enforced: the zero-boundary kernel resamples only box-contained loops, so its");
    note("stationary law is the contained-thinned one and cannot match the all-loops closed");
    note("form above; the matched formulations 01b and 01c below are enforced instead.");

    // (b) matched closed form: the open-boundary kernel resamples every loop
    // started in the box, which is exactly the population the closed form
    // counts.  Truncation j_max = 65536 leaves a mean deficit
    // 8 (2 pi)^{-3/2} * 2/sqrt(j_max) ~ 4e-3, far under the 3 SE gate.
    const auto spec_free = make_measure_spec(box, g, 0.0, 65536, 1e-8);
    std::vector<double> free_ns;
    free_ns.reserve(static_cast<std::size_t>(cfg.steps / cfg.thinning));
    run_kernel<3>(KernelKind::free_bc, spec_free, none, Configuration<3>{}, cfg,
                  Philox(1002, 0, StreamPurpose::chain), [&](long, const Chain<3>& c) {
                      free_ns.push_back(
                          static_cast<double>(particle_count(c.configuration(), box)));
                  });
    const double free_mean = mean_of(free_ns);
    const double free_se = batch_means_se(free_ns);
    const bool free_mean_ok = std::abs(free_mean - mean_closed) <= 3.0 * free_se;

    std::vector<double> lam_free(spec_free.weights.size());
    for (std::size_t i = 0; i < lam_free.size(); ++i)
        lam_free[i] = spec_free.volume() * spec_free.weights[i];
    const Chi2Result free_chi2 =
        chi2_goodness(count_histogram(free_ns, 48), lumped_count_probs(lam_free, 48));
    report("01b", "ideal gas, open-boundary kernel vs closed form",
           free_mean_ok && free_chi2.p >= 0.01,
           "mean " + fmt(free_mean) + " +- " + fmt(free_se, 3) + " vs " + fmt(mean_closed, 8) +
               ", count-law p " + fmt(free_chi2.p, 3));

    // (c) matched reference: the zero-boundary kernel against direct draws
    // from its own stationary law (contained-thinned Poisson soup).
    std::vector<double> ref_ns;
    Philox ref_rng(1003, 0, StreamPurpose::measure);
    for (int s = 0; s < 5000; ++s)
        ref_ns.push_back(
            static_cast<double>(particle_count(sample_dirichlet(spec64, ref_rng), box)));
    const Chi2Result cmp = two_sample_chi2(dir_ns, ref_ns);
    report("01c", "ideal gas, zero-boundary kernel vs direct draws", cmp.p >= 0.01,
           "chain mean " + fmt(dir_mean) + ", direct mean " + fmt(mean_of(ref_ns)) +
               ", two-sample p " + fmt(cmp.p, 3));
}

// ---------------------------------------------------------------------------
// 02: truncated loop-measure mass against the closed form on a unit box

void criterion_02() {
    const TimeGrid g = make_time_grid(1.0, 16);
    const auto spec = make_measure_spec(centered_cube<3>(1.0), g, 0.0, 4000, 1e-6);
    const double mass = measure_mass(spec);
    const double tol = 1e-6; // truncation tail at j_max = 4000 is below 2e-7
    report("02", "loop-measure mass, unit box", std::abs(mass - k_mass_per_volume) < tol,
           "mass " + fmt(mass, 12) + " vs " + fmt(k_mass_per_volume, 12) + ", |diff| " +
               fmt(std::abs(mass - k_mass_per_volume), 3) + " < " + fmt(tol, 2));
}

// ---------------------------------------------------------------------------
// 03: bridge endpoints pinned exactly; mid-time variance = t/4 per coordinate

void criterion_03() {
    const TimeGrid g = make_time_grid(1.0, 16);
    const int steps = 32; // duration t = 2, midpoint s = 1, var s(t-s)/t = 1/2
    const Vec<3> x{0.3, -1.2, 0.7};
    const Vec<3> y{1.1, 0.4, -0.5};
    const double t = steps * g.dt();
    const double var_target = t / 4.0;

    Philox rng(3001, 0, StreamPurpose::paths);
    long pin_failures = 0;
    RunningStat dev2;
    const long n_bridges = 100000;
    for (long s = 0; s < n_bridges; ++s) {
        const auto pts = sample_bridge_steps(x, y, steps, g, rng);
        if (pts.front() != x || pts.back() != y) ++pin_failures;
        const Vec<3>& mid = pts[static_cast<std::size_t>(steps / 2)];
        for (int i = 0; i < 3; ++i) {
            const double d = mid[i] - 0.5 * (x[i] + y[i]);
            dev2.add(d * d);
        }
    }
    const double var_hat = dev2.mean(); // mean known exactly, no dof correction
    const double rel = std::abs(var_hat / var_target - 1.0);
    report("03", "bridge pinning and mid-time variance", pin_failures == 0 && rel <= 0.02,
           "pin failures " + std::to_string(pin_failures) + "/" + std::to_string(n_bridges) +
               ", var " + fmt(var_hat) + " vs " + fmt(var_target) + " (rel " + fmt(rel, 3) +
               " <= 0.02)");
}

// ---------------------------------------------------------------------------
// 04: excursion split followed by glue reproduces crossing loops exactly

void criterion_04() {
    const Box<3> box = centered_cube<3>(2.0);
    const TimeGrid g = make_time_grid(1.0, 8);
    Philox rng(4001, 0, StreamPurpose::paths);

    long tested = 0, mismatches = 0;
    int j = 1;
    while (tested < 1000) {
        Vec<3> anchor;
        for (int i = 0; i < 3; ++i) anchor[i] = rng.uniform(-1.3, 1.3);
        const Loop<3> w = sample_loop(anchor, j, g, rng);
        j = j % 4 + 1;
        if (placement(w, box) != Placement::crossing) continue;
        ++tested;
        const auto sr = split_excursions(w, box);
        const auto glued = glue(sr.interior, sr.exterior, g);
        const bool same =
            glued.size() == 1 && glued[0].j == w.j && glued[0].points == w.points;
        if (!same) ++mismatches;
    }
    report("04", "split/glue round trip on crossing loops", mismatches == 0,
           std::to_string(mismatches) + " mismatches in " + std::to_string(tested) +
               " loops (exact point equality)");
}

// ---------------------------------------------------------------------------
// 05: window-energy additivity under adding one loop
//   H(alpha + w) - H(alpha) = 1{w in} (W(w) + sum_omega T(w, omega))
//                           + 1{w out} sum_{omega in} T(w, omega)

void criterion_05() {
    const Box<3> box = make_box<3>(Vec<3>{0, 0, 0}, Vec<3>{2, 2, 2});
    const TimeGrid g = make_time_grid(1.0, 8);
    const Potential pot = Potential::gaussian(1.0, 0.7);
    Philox rng(5001, 0, StreamPurpose::oracle);

    long failures = 0;
    double worst = 0;
    const int n_instances = 1000;
    for (int s = 0; s < n_instances; ++s) {
        Configuration<3> base;
        for (int b = 0; b < 3; ++b) {
            Vec<3> anchor;
            for (int i = 0; i < 3; ++i) anchor[i] = rng.uniform(-0.5, 2.5);
            base.loops.push_back(sample_loop(anchor, b + 1, g, rng));
        }
        Vec<3> anchor;
        for (int i = 0; i < 3; ++i) anchor[i] = rng.uniform(-0.5, 2.5);
        const Loop<3> w = sample_loop(anchor, 2, g, rng);

        double delta = 0;
        if (started_in(w, box)) {
            delta = self_W(w, pot, g);
            for (const auto& omega : base.loops) delta += pair_T(w, omega, pot, g);
        } else {
            for (const auto& omega : base.loops)
                if (started_in(omega, box)) delta += pair_T(w, omega, pot, g);
        }

        const double h0 = hamiltonian(base, box, pot, g).total();
        Configuration<3> grown = base;
        grown.loops.push_back(w);
        const double h1 = hamiltonian(grown, box, pot, g).total();

        const double scale = std::max({1.0, std::abs(h0), std::abs(h1)});
        const double rel = std::abs((h1 - h0) - delta) / scale;
        worst = std::max(worst, rel);
        if (rel > 1e-9) ++failures;
    }
    report("05", "window-energy additivity", failures == 0,
           std::to_string(failures) + " failures in " + std::to_string(n_instances) +
               " instances, worst rel err " + fmt(worst, 3) + " (tol 1e-9)");
}

// ---------------------------------------------------------------------------
// 06: incremental energy cache against a from-scratch recompute after 1e4
// mixed moves, for the excursion and the zero-boundary kernel

void criterion_06() {
    const Box<3> box = make_box<3>(Vec<3>{0, 0, 0}, Vec<3>{2, 2, 2});
    const TimeGrid g = make_time_grid(1.0, 8);
    const Potential pot = Potential::gaussian(1.0, 1.0);
    const auto spec = make_measure_spec(box, g, 0.0, 16, 1e-3);
    const Configuration<3> cond = mixed_conditioning(box, g, 6001);

    McmcConfig cfg;
    cfg.p_birth = 0.3;
    cfg.p_death = 0.3;
    cfg.p_rebridge = 0.4;
    cfg.recheck_interval = 1L << 30; // no automatic audits; this test is the audit

    double worst = 0;
    bool ok = true;
    const KernelKind kinds[] = {KernelKind::excursion, KernelKind::dirichlet};
    for (int ki = 0; ki < 2; ++ki) {
        Chain<3> chain(kinds[ki], spec, pot, cond, cfg,
                       Philox(6002 + static_cast<std::uint64_t>(ki), 0, StreamPurpose::chain));
        chain.run(10000);

        // Frozen-frozen terms are constants excluded from the cache, so the
        // cache must equal H(full) - H(frozen prefix).
        const Configuration<3> full = chain.configuration();
        const std::size_t frozen_count =
            full.loops.size() - chain.interior_configuration().loops.size();
        Configuration<3> frozen;
        frozen.loops.assign(full.loops.begin(),
                            full.loops.begin() + static_cast<long>(frozen_count));
        const double want =
            static_cast<double>(oracle::window_hamiltonian(full, box, pot, g) -
                                oracle::window_hamiltonian(frozen, box, pot, g));
        const double got = chain.cached_total();
        const double rel = std::abs(got - want) / std::max(1.0, std::abs(want));
        worst = std::max(worst, rel);
        ok = ok && rel <= 1e-9;
        chain.audit_cache(1e-9); // throws on drift
    }
    report("06", "energy cache vs recompute, 1e4 mixed moves", ok,
           "worst rel err " + fmt(worst, 3) + " (tol 1e-9), self-audit clean");
}

// ---------------------------------------------------------------------------
// 07: single-loop weight decay for a soft repulsion: log-weights decreasing,
// fitted rate positive with its CI off zero, and at least the certified
// two-walk bound minus 3 SE

void criterion_07() {
    const TimeGrid g = make_time_grid(1.0, 16);
    const Potential pot = Potential::gaussian(1.0, 1.0);
    const std::vector<int> js = {4, 8, 12, 16, 20, 24};

    Philox fit_rng(7001, 0, StreamPurpose::verify);
    const DecayFit d = fit_single_loop_decay<3>(js, g, pot, 2000, 300000, fit_rng);

    Philox bound_rng(7002, 0, StreamPurpose::verify);
    const CphiBound cb = estimate_cphi_bound<3>(g, pot, 200000, bound_rng);

    const bool ci_off_zero = d.fit.slope + 3.0 * d.fit.se_slope < 0.0;
    const double margin = 3.0 * std::sqrt(d.rate_se * d.rate_se + cb.se * cb.se);
    const bool above_bound = d.rate >= cb.bound - margin;
    report("07", "single-loop weight decay rate", d.log_decreasing && ci_off_zero && above_bound,
           "rate " + fmt(d.rate) + " +- " + fmt(d.rate_se, 3) + ", certified bound " +
               fmt(cb.bound) + " +- " + fmt(cb.se, 3) + ", log-decreasing " +
               (d.log_decreasing ? "yes" : "no"));
}

// ---------------------------------------------------------------------------
// 08: count domination: the interacting zero-boundary chain's mean count must
// not exceed the self-weighted reference soup's mean count

void criterion_08() {
    const Box<3> box = make_box<3>(Vec<3>{0, 0, 0}, Vec<3>{2, 2, 2});
    // beta = 1/4 makes the soup dense enough (mean count ~ 3) that pair
    // repulsion visibly suppresses the count, so the one-sided gate has power
    // instead of comparing two near-identical dilute laws.
    const TimeGrid g = make_time_grid(0.25, 8);
    const auto spec = make_measure_spec(box, g, 0.0, 16, 1e-2);

    const Potential pots[] = {Potential::gaussian(1.0, 1.0), Potential::hard_core(0.5)};
    const char* ids[] = {"08a", "08b"};
    const char* names[] = {"count domination, soft repulsion", "count domination, hard core"};
    for (int pi = 0; pi < 2; ++pi) {
        Philox ph_rng(8001 + static_cast<std::uint64_t>(pi), 0, StreamPurpose::measure);
        RunningStat ph;
        for (int s = 0; s < 4000; ++s)
            ph.add(static_cast<double>(particle_count(sample_ph(spec, pots[pi], ph_rng), box)));

        McmcConfig cfg;
        cfg.steps = 200000;
        cfg.burnin = 20000;
        cfg.thinning = 40;
        std::vector<double> ns;
        run_kernel<3>(KernelKind::dirichlet, spec, pots[pi], Configuration<3>{}, cfg,
                      Philox(8101 + static_cast<std::uint64_t>(pi), 0, StreamPurpose::chain),
                      [&](long, const Chain<3>& c) {
                          ns.push_back(
                              static_cast<double>(particle_count(c.configuration(), box)));
                      });
        const double chain_mean = mean_of(ns);
        const double chain_se = batch_means_se(ns);
        const double slack = 3.0 * std::sqrt(chain_se * chain_se + ph.se() * ph.se());
        report(ids[pi], names[pi], chain_mean <= ph.mean() + slack,
               "chain " + fmt(chain_mean) + " +- " + fmt(chain_se, 3) + " <= reference " +
                   fmt(ph.mean()) + " +- " + fmt(ph.se(), 3) + " (one-sided, 3 SE)");
    }
}

// ---------------------------------------------------------------------------
// 09: nested-window consistency on [0,3]^3 with inner window [1,2]^3, both
// the zero-boundary and the non-crossing excursion variant, within 10 minutes

void criterion_09() {
    const auto t0 = std::chrono::steady_clock::now();
    const Box<3> outer = make_box<3>(Vec<3>{0, 0, 0}, Vec<3>{3, 3, 3});
    const Box<3> inner = make_box<3>(Vec<3>{1, 1, 1}, Vec<3>{2, 2, 2});
    // beta = 1/4 keeps loops small enough that the unit inner window actually
    // carries resampleable content at these box sizes; at beta = 1 the inner
    // window is empty in ~96% of outer samples and the comparison is vacuous.
    const TimeGrid g = make_time_grid(0.25, 8);
    const Potential pot = Potential::gaussian(1.0, 1.0);

    ConsistencyParams p;
    p.level = 0.01;
    p.outer.steps = 100000;
    p.outer.burnin = 6000;
    p.outer.thinning = 200;
    p.inner.burnin = 500;

    const ConsistencyReport dir = consistency_test<3>(outer, inner, g, 0.0, pot, 16, 1e-2, p, 9001);

    ConsistencyParams pg = p;
    pg.gamma_variant = true;
    pg.outer.steps = 140000;
    const ConsistencyReport gam =
        consistency_test<3>(outer, inner, g, 0.0, pot, 16, 1e-2, pg, 9002);

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double dir_minp = std::min({dir.cmp.t_p_count, dir.cmp.t_p_diam, dir.cmp.t_p_energy,
                                      dir.cmp.chi2_count.p, dir.cmp.ks_p_diam});
    const double gam_minp = std::min({gam.cmp.t_p_count, gam.cmp.t_p_diam, gam.cmp.t_p_energy,
                                      gam.cmp.chi2_count.p, gam.cmp.ks_p_diam});
    report("09", "nested-window consistency", dir.cmp.pass && gam.cmp.pass && elapsed < 600.0,
           "zero-boundary min p " + fmt(dir_minp, 3) + " (" + std::to_string(dir.used_samples) +
               " pairs), non-crossing min p " + fmt(gam_minp, 3) + " (" +
               std::to_string(gam.used_samples) + " pairs), level 0.01, " + fmt(elapsed, 3) +
               " s < 600 s");
}

// ---------------------------------------------------------------------------
// 10: loop-diameter tails decay at least at the Gaussian rate 1/(8 beta j)

void criterion_10() {
    const TimeGrid g = make_time_grid(1.0, 16);
    bool all = true;
    std::string detail;
    for (int j : {1, 4, 16}) {
        Philox rng(10001 + static_cast<std::uint64_t>(j), 0, StreamPurpose::verify);
        const DiameterTailReport r = diameter_tail_test<3>(j, g, 30000, rng);
        all = all && r.pass;
        if (!detail.empty()) detail += ", ";
        detail += "j=" + std::to_string(j) + ": " + fmt(r.rate_hat, 4) + " vs " +
                  fmt(r.required_rate, 4) + (r.pass ? "" : " [fail]");
    }
    report("10", "diameter tails, one-sided Gaussian bound", all,
           detail + " (rate >= required - 3 SE)");
}

// ---------------------------------------------------------------------------
// 11: tiled approximations stay in the tempered family whose (K, L) are
// calibrated from the self-weighted reference soup on the side-4 cube

void criterion_11() {
    const TimeGrid g = make_time_grid(1.0, 8);
    const Potential pot = Potential::gaussian(1.0, 1.0);
    const Box<3> window = centered_cube<3>(4.0);
    const auto spec4 = make_measure_spec(window, g, 0.0, 16, 1e-3);
    const double alpha = 0.5;
    const int n_max = 4;

    // Calibrate: per-draw worst demands over the nested cubes, then the
    // 99.5% quantile with one count unit / half a diameter unit of headroom.
    Philox cal_rng(11001, 0, StreamPurpose::measure);
    std::vector<double> need_k, need_l;
    for (int s = 0; s < 4000; ++s) {
        const Configuration<3> eta = sample_ph(spec4, pot, cal_rng);
        double nk = 0, nl = 0;
        for (int n = 1; n <= n_max; ++n) {
            const Box<3> cube = centered_cube<3>(static_cast<double>(n));
            const double vol = std::pow(static_cast<double>(n), 3);
            nk = std::max(nk, static_cast<double>(particle_count(eta, cube)) / vol);
            nl = std::max(nl, max_diameter(eta, cube) - std::pow(static_cast<double>(n), alpha));
        }
        need_k.push_back(nk);
        need_l.push_back(nl);
    }
    TemperedSpec tspec;
    tspec.alpha = alpha;
    tspec.n_max = n_max;
    tspec.K = std::max(1.0, std::ceil(quantile_of(need_k, 0.995)) + 1.0);
    tspec.L = std::max(0.5, quantile_of(need_l, 0.995) + 0.5);

    McmcConfig cfg;
    cfg.steps = 2000;
    cfg.burnin = 1000;
    cfg.thinning = 2000;

    bool all = true;
    std::string detail = "K " + fmt(tspec.K, 3) + ", L " + fmt(tspec.L, 3) + ";";
    for (int n = 1; n <= n_max; ++n) {
        const int n_draws = 100;
        int member = 0;
        for (int s = 0; s < n_draws; ++s) {
            GnParams gp;
            gp.n = n;
            gp.seed = 11100 + static_cast<std::uint64_t>(n);
            gp.replica = static_cast<std::uint32_t>(s);
            const GnSample<3> smp = sample_gn<3>(window, gp, g, 0.0, pot, 16, 1e-3, cfg);
            if (tempered_membership(smp.loops, tspec).member) ++member;
        }
        const double rate = static_cast<double>(member) / n_draws;
        all = all && rate >= 0.99;
        detail += " n=" + std::to_string(n) + ": " + fmt(100.0 * rate, 4) + "%";
    }
    report("11", "tiled samples are tempered", all, detail + " (each >= 99%)");
}

// ---------------------------------------------------------------------------
// 12: identical seeds give byte-identical observable records and snapshots

void criterion_12() {
    const Box<3> box = make_box<3>(Vec<3>{0, 0, 0}, Vec<3>{2, 2, 2});
    const TimeGrid g = make_time_grid(1.0, 8);
    const Potential pot = Potential::gaussian(1.0, 1.0);
    const auto spec = make_measure_spec(box, g, 0.0, 8, 1e-2);

    McmcConfig cfg;
    cfg.steps = 20000;
    cfg.burnin = 2000;
    cfg.thinning = 100;

    const auto dir = std::filesystem::temp_directory_path();
    const std::filesystem::path paths[2] = {dir / "loopsoup_accept_rec_a.jsonl",
                                            dir / "loopsoup_accept_rec_b.jsonl"};
    std::string snapshots[2];
    for (int run = 0; run < 2; ++run) {
        RecordWriter writer(paths[run].string(), fnv1a_hex("criterion-12 determinism probe"),
                            "chain-0");
        // Snapshot every retained configuration, not just the final one: most
        // retained states are empty at this density, and an empty snapshot
        // would make the byte comparison vacuous for the coordinate text.
        std::ostringstream snap;
        run_kernel<3>(KernelKind::dirichlet, spec, pot, Configuration<3>{}, cfg,
                      Philox(12001, 0, StreamPurpose::chain), [&](long idx, const Chain<3>& c) {
                          const Configuration<3> conf = c.configuration();
                          const EnergyBreakdown eb = c.breakdown();
                          ObservableRecord r;
                          r.step = idx;
                          r.n_loops = static_cast<long>(conf.loops.size());
                          r.n_particles = static_cast<double>(particle_count(conf, box));
                          r.max_diam = max_diameter(conf, box);
                          r.n_psi = r.n_particles;
                          r.e_self = eb.self;
                          r.e_pair = eb.pair_internal;
                          r.e_bnd = eb.pair_boundary;
                          r.acc_birth = c.tallies().rate(MoveKind::birth);
                          r.acc_death = c.tallies().rate(MoveKind::death);
                          r.acc_rebridge = c.tallies().rate(MoveKind::rebridge);
                          r.acc_exc = c.tallies().rate(MoveKind::exc_rebridge);
                          writer.write(r);
                          write_snapshot(snap, conf, g);
                      });
        snapshots[run] = snap.str();
    }
    const std::string a = slurp(paths[0]), b = slurp(paths[1]);
    const bool files_same = !a.empty() && a == b;
    const bool snaps_same = !snapshots[0].empty() && snapshots[0] == snapshots[1];
    std::filesystem::remove(paths[0]);
    std::filesystem::remove(paths[1]);
    report("12", "byte-identical records on re-run", files_same && snaps_same,
           std::to_string(a.size()) + " record bytes, " +
               std::to_string(snapshots[0].size()) + " snapshot bytes, both runs equal");
}

} // namespace

int main() {
    struct Entry {
        const char* id;
        const char* name;
        void (*fn)();
    };
    const Entry entries[] = {
        {"01", "ideal-gas count law", criterion_01},
        {"02", "loop-measure mass, unit box", criterion_02},
        {"03", "bridge pinning and mid-time variance", criterion_03},
        {"04", "split/glue round trip on crossing loops", criterion_04},
        {"05", "window-energy additivity", criterion_05},
        {"06", "energy cache vs recompute", criterion_06},
        {"07", "single-loop weight decay rate", criterion_07},
        {"08", "count domination", criterion_08},
        {"09", "nested-window consistency", criterion_09},
        {"10", "diameter tails", criterion_10},
        {"11", "tiled samples are tempered", criterion_11},
        {"12", "byte-identical records on re-run", criterion_12},
    };
    for (const auto& e : entries) {
        try {
            e.fn();
        } catch (const std::exception& ex) {
            report(e.id, e.name, false, std::string("exception: ") + ex.what());
        }
    }
    std::cout << "acceptance: " << (g_enforced - g_failed) << "/" << g_enforced
              << " enforced criteria passed\n";
    return g_failed == 0 ? 0 : 1;
}
