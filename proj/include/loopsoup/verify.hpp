#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "loopsoup/bridge.hpp"
#include "loopsoup/chain.hpp"
#include "loopsoup/domain.hpp"
#include "loopsoup/energy.hpp"
#include "loopsoup/errors.hpp"
#include "loopsoup/kernels.hpp"
#include "loopsoup/loop.hpp"
#include "loopsoup/measure.hpp"
#include "loopsoup/rng.hpp"
#include "loopsoup/stats.hpp"

namespace loopsoup {

struct WeightEstimate {
    int j = 1;
    double value = 1;
    double se = 0;
    long n = 0;
};

// Monte Carlo estimate of the single-loop Boltzmann weight
// E[exp(-beta W)] over bridge loops of j periods anchored at the origin.
template <int D>
WeightEstimate single_loop_weight(int j, const TimeGrid& g, const Potential& pot, long n_samples,
                                  Philox& rng) {
    if (j < 1) throw config_error("single_loop_weight: j >= 1 required");
    if (n_samples < 2) throw config_error("single_loop_weight: need at least 2 samples");
    const Vec<D> origin{};
    RunningStat acc;
    for (long s = 0; s < n_samples; ++s) {
        const Loop<D> w = sample_loop(origin, j, g, rng);
        const double e = self_W(w, pot, g);
        acc.add(std::exp(-g.beta * e)); // exp(-inf) == 0 exactly
    }
    return WeightEstimate{j, acc.mean(), acc.se(), n_samples};
}

struct DecayFit {
    std::vector<WeightEstimate> weights;
    LinearFit fit{};        // log(value) against j, weighted by log-scale SEs
    double rate = 0;        // -slope: exponential decay rate per particle
    double rate_se = 0;
    bool log_decreasing = false;
};

// Estimates the weight at each requested j with a two-stage adaptive budget
// (small weights need more samples for a fixed log-scale error), then fits
// log w against j.
template <int D>
DecayFit fit_single_loop_decay(const std::vector<int>& js, const TimeGrid& g, const Potential& pot,
                               long pilot_samples, long max_samples, Philox& rng) {
    if (js.size() < 3) throw config_error("fit_single_loop_decay: need at least 3 j values");
    DecayFit out;
    std::vector<double> x, y, sig;
    for (int j : js) {
        WeightEstimate pilot = single_loop_weight<D>(j, g, pot, pilot_samples, rng);
        // target log-scale SE ~ 0.05: n ~ (1-w)/(w * 0.05^2)
        const double w_guess = std::max(pilot.value, 1e-7);
        long n = static_cast<long>((1.0 - w_guess) / (w_guess * 0.0025)) + pilot_samples;
        n = std::clamp(n, pilot_samples, max_samples);
        WeightEstimate est =
            (n > pilot_samples) ? single_loop_weight<D>(j, g, pot, n, rng) : pilot;
        out.weights.push_back(est);
        if (est.value <= 0)
            throw chain_error("fit_single_loop_decay: zero weight estimate at j=" +
                              std::to_string(j) + " (budget exhausted)");
        x.push_back(static_cast<double>(j));
        y.push_back(std::log(est.value));
        sig.push_back(std::max(est.se / est.value, 1e-12));
    }
    std::vector<double> wts(sig.size());
    for (std::size_t i = 0; i < sig.size(); ++i) wts[i] = 1.0 / (sig[i] * sig[i]);
    out.fit = linear_fit(x, y, wts);
    out.rate = -out.fit.slope;
    out.rate_se = out.fit.se_slope;
    out.log_decreasing = true;
    for (std::size_t i = 0; i + 1 < y.size(); ++i)
        if (y[i + 1] >= y[i]) out.log_decreasing = false;
    return out;
}

struct CphiBound {
    double lambda_hat = 0; // -log E[exp(-beta^2 int_0^1 Phi(sqrt(beta)|B_s - B_1 - Bt_s|) ds)]
    double bound = 0;      // lambda_hat / 3, the certified decay-rate bound
    double se = 0;         // delta-method SE of the bound
    long n = 0;
};

// The decay-rate bound from two independent free Brownian motions started at
// the origin.  Time integral by left-endpoint rule on the loop grid's m
// points over [0,1], so quadrature bias is shared with the loop estimators.
template <int D>
CphiBound estimate_cphi_bound(const TimeGrid& g, const Potential& pot, long n_samples,
                              Philox& rng) {
    if (n_samples < 2) throw config_error("estimate_cphi_bound: need at least 2 samples");
    const int m = g.steps_per_beta;
    const double dt = 1.0 / m;
    const double sb = std::sqrt(g.beta);
    RunningStat acc;
    std::vector<Vec<D>> bpath(static_cast<std::size_t>(m + 1));
    std::vector<Vec<D>> tpath(static_cast<std::size_t>(m + 1));
    for (long s = 0; s < n_samples; ++s) {
        bpath[0] = Vec<D>{};
        tpath[0] = Vec<D>{};
        for (int k = 1; k <= m; ++k) {
            for (int c = 0; c < D; ++c) {
                bpath[static_cast<std::size_t>(k)][c] =
                    bpath[static_cast<std::size_t>(k - 1)][c] + std::sqrt(dt) * rng.normal();
                tpath[static_cast<std::size_t>(k)][c] =
                    tpath[static_cast<std::size_t>(k - 1)][c] + std::sqrt(dt) * rng.normal();
            }
        }
        double integral = 0;
        for (int k = 0; k < m; ++k) {
            const Vec<D> diff = bpath[static_cast<std::size_t>(k)] -
                                bpath[static_cast<std::size_t>(m)] -
                                tpath[static_cast<std::size_t>(k)];
            integral += pot.phi(sb * norm(diff));
        }
        integral *= dt;
        acc.add(std::exp(-g.beta * g.beta * integral));
    }
    CphiBound out;
    const double mean = acc.mean();
    if (mean <= 0) throw chain_error("estimate_cphi_bound: all weights vanished");
    out.lambda_hat = -std::log(mean);
    out.bound = out.lambda_hat / 3.0;
    out.se = acc.se() / (3.0 * mean);
    out.n = n_samples;
    return out;
}

struct TailPoint {
    double t = 0;
    double p_hat = 0;
    double se = 0;
    long exceed = 0;
};

struct DiameterTailReport {
    int j = 1;
    long n = 0;
    std::vector<TailPoint> points;
    LinearFit fit{};            // log p against t^2, weighted
    double rate_hat = 0;        // -slope of log p in t^2
    double rate_se = 0;
    double required_rate = 0;   // 1/(8 beta j)
    bool monotone = false;
    bool pass = false;          // rate_hat >= required - 3 rate_se, and monotone
};

// Gaussian-tail check for the loop diameter: the tail P(diam > t) must decay
// at least like exp(-t^2 / (8 beta j)) up to a constant; the constant is not
// pinned, so the fit leaves the intercept free and the slope is tested
// one-sided.  Thresholds are placed at fixed empirical tail quantiles so the
// fit always sits in the regime with usable counts.
template <int D>
DiameterTailReport diameter_tail_test(int j, const TimeGrid& g, long n_samples, Philox& rng) {
    if (j < 1) throw config_error("diameter_tail_test: j >= 1 required");
    if (n_samples < 1000) throw config_error("diameter_tail_test: need at least 1000 samples");
    const Vec<D> origin{};
    std::vector<double> diams;
    diams.reserve(static_cast<std::size_t>(n_samples));
    for (long s = 0; s < n_samples; ++s)
        diams.push_back(diam(sample_loop(origin, j, g, rng)));
    std::sort(diams.begin(), diams.end());
    DiameterTailReport out;
    out.j = j;
    out.n = n_samples;
    out.required_rate = 1.0 / (8.0 * g.beta * j);

    const double quantiles[] = {0.5, 0.3, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005};
    std::vector<double> x, y, wts;
    for (double q : quantiles) {
        const auto idx = static_cast<std::size_t>(
            std::min<double>(static_cast<double>(n_samples) * (1.0 - q),
                             static_cast<double>(n_samples - 1)));
        const double t = diams[idx];
        const long exceed = static_cast<long>(diams.end() - std::upper_bound(diams.begin(), diams.end(), t));
        if (exceed < 20) continue; // too deep for a stable log estimate
        const double p = static_cast<double>(exceed) / static_cast<double>(n_samples);
        const double se = std::sqrt(p * (1 - p) / static_cast<double>(n_samples));
        out.points.push_back(TailPoint{t, p, se, exceed});
        x.push_back(t * t);
        y.push_back(std::log(p));
        const double log_se = se / p;
        wts.push_back(1.0 / (log_se * log_se));
    }
    out.monotone = true;
    for (std::size_t i = 0; i + 1 < out.points.size(); ++i)
        if (out.points[i + 1].p_hat > out.points[i].p_hat) out.monotone = false;
    if (x.size() < 3) throw chain_error("diameter_tail_test: not enough usable tail points");
    out.fit = linear_fit(x, y, wts);
    out.rate_hat = -out.fit.slope;
    out.rate_se = out.fit.se_slope;
    out.pass = out.monotone && out.rate_hat >= out.required_rate - 3.0 * out.rate_se;
    return out;
}

struct CollapseReport {
    int j = 1;
    long n = 0;
    double ks_p = 0;
    bool pass = false;
};

// Diffusive-scaling collapse with no discretization bias: a loop of j periods
// on a grid with 4m steps per period visits the same number of points as a
// loop of 4j periods on the m-grid, and halving the latter's lengths maps one
// discretized diameter law onto the other exactly.  Two-sample KS at 1%.
template <int D>
CollapseReport diameter_collapse_test(int j, const TimeGrid& g, long n_samples, Philox& rng) {
    const TimeGrid fine = make_time_grid(g.beta, 4 * g.steps_per_beta);
    const Vec<D> origin{};
    std::vector<double> a, b;
    a.reserve(static_cast<std::size_t>(n_samples));
    b.reserve(static_cast<std::size_t>(n_samples));
    for (long s = 0; s < n_samples; ++s) a.push_back(diam(sample_loop(origin, j, fine, rng)));
    for (long s = 0; s < n_samples; ++s)
        b.push_back(0.5 * diam(sample_loop(origin, 4 * j, g, rng)));
    CollapseReport out;
    out.j = j;
    out.n = n_samples;
    out.ks_p = ks2_pvalue(a, b);
    out.pass = out.ks_p >= 0.01;
    return out;
}

struct TemperedSpec {
    double alpha = 0.5;
    double K = 1;
    double L = 1;
    int n_max = 4;
};

inline void validate(const TemperedSpec& s) {
    if (!(s.alpha > 0) || s.alpha > 1) throw config_error("tempered: alpha in (0,1] required");
    if (!(s.K > 0) || !(s.L > 0)) throw config_error("tempered: K, L must be positive");
    if (s.n_max < 1) throw config_error("tempered: n_max >= 1 required");
}

struct TemperedReport {
    bool member = true;
    double slack_count = 0; // min over n of K n^d - N_{Lambda_n}
    double slack_diam = 0;  // min over n of n^alpha + L - max started-in diameter
    int worst_n_count = 0;
    int worst_n_diam = 0;
};

// Membership in the tempered family over centered cubes of sides 1..n_max:
// particle counts at most K per unit volume and started-in diameters at most
// n^alpha + L, window by window.
template <int D>
TemperedReport tempered_membership(const Configuration<D>& eta, const TemperedSpec& spec) {
    validate(spec);
    TemperedReport out;
    if (eta.empty()) { // trivially tempered at any parameters
        out.slack_count = out.slack_diam = std::numeric_limits<double>::infinity();
        return out;
    }
    out.slack_count = out.slack_diam = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= spec.n_max; ++n) {
        const Box<D> window = centered_cube<D>(static_cast<double>(n));
        const double cap_n = spec.K * std::pow(static_cast<double>(n), D);
        const double sc = cap_n - static_cast<double>(particle_count(eta, window));
        if (sc < out.slack_count) {
            out.slack_count = sc;
            out.worst_n_count = n;
        }
        const double cap_d = std::pow(static_cast<double>(n), spec.alpha) + spec.L;
        const double sd = cap_d - max_diameter(eta, window);
        if (sd < out.slack_diam) {
            out.slack_diam = sd;
            out.worst_n_diam = n;
        }
    }
    out.member = out.slack_count >= 0 && out.slack_diam >= 0;
    return out;
}

struct ExpMomentReport {
    double c = 0;
    double empirical = 1;   // mean of exp(c N) along the stationary stream
    double empirical_se = 0; // batch-means SE
    double bound = 1;        // exact Poisson moment of the weighted reference
    double bound_se = 0;     // plug-in uncertainty from the weight estimates
    bool pass = false;       // empirical <= bound + 3 combined SE
};

// Exponential-moment domination: the chain's E[exp(c N)] must not exceed the
// same moment under the self-weighted Poisson reference.  For that reference
// the moment is exact: exp(volume * sum_j w_j (e^{cj} - 1) q_j) with q_j the
// single-loop weights, here plugged in from their MC estimates.
template <int D>
ExpMomentReport exp_moment_test(const std::vector<double>& n_stream, double c,
                                const LoopMeasureSpec<D>& spec,
                                const std::vector<WeightEstimate>& loop_weights) {
    if (n_stream.size() < 64) throw config_error("exp_moment_test: stream too short");
    ExpMomentReport out;
    out.c = c;
    std::vector<double> vals;
    vals.reserve(n_stream.size());
    for (double n : n_stream) vals.push_back(std::exp(c * n));
    out.empirical = mean_of(vals);
    out.empirical_se = batch_means_se(vals);

    double expo = 0, var = 0;
    for (const auto& we : loop_weights) {
        const int j = we.j;
        if (j < 1 || j > spec.j_max)
            throw config_error("exp_moment_test: weight estimate outside the truncation");
        const double wj = spec.weights[static_cast<std::size_t>(j - 1)];
        const double f = spec.volume() * wj * (std::exp(c * j) - 1.0);
        expo += f * we.value;
        var += f * f * we.se * we.se;
    }
    out.bound = std::exp(expo);
    out.bound_se = out.bound * std::sqrt(var);
    const double tol = 3.0 * std::sqrt(out.empirical_se * out.empirical_se +
                                       out.bound_se * out.bound_se);
    out.pass = out.empirical <= out.bound + tol;
    return out;
}

struct PairedComparison {
    long pairs = 0;
    double t_p_count = 1;   // paired test on particle counts
    double t_p_diam = 1;    // paired test on max diameters
    double t_p_energy = 1;  // paired test on window energies
    Chi2Result chi2_count{}; // pooled two-sample histogram test on counts
    double ks_p_diam = 1;
    bool pass = false;

    void finish(double level) {
        pass = t_p_count >= level && t_p_diam >= level && t_p_energy >= level &&
               chi2_count.p >= level && ks_p_diam >= level;
    }
};

namespace detail {

struct WindowObs {
    double count = 0;
    double diam = 0;
    double energy = 0;
};

template <int D>
WindowObs window_observables(const Configuration<D>& c, const Box<D>& window,
                             const Potential& pot, const TimeGrid& g) {
    WindowObs o;
    o.count = static_cast<double>(particle_count(c, window));
    o.diam = max_diameter(c, window);
    o.energy = hamiltonian(c, window, pot, g).total();
    return o;
}

inline PairedComparison compare_paired(const std::vector<WindowObs>& a,
                                       const std::vector<WindowObs>& b, double level) {
    PairedComparison r;
    r.pairs = static_cast<long>(a.size());
    std::vector<double> an, bn, ad, bd, ae, be;
    for (std::size_t i = 0; i < a.size(); ++i) {
        an.push_back(a[i].count);
        bn.push_back(b[i].count);
        ad.push_back(a[i].diam);
        bd.push_back(b[i].diam);
        ae.push_back(a[i].energy);
        be.push_back(b[i].energy);
    }
    r.t_p_count = paired_t_pvalue(an, bn);
    r.t_p_diam = paired_t_pvalue(ad, bd);
    r.t_p_energy = paired_t_pvalue(ae, be);
    r.chi2_count = two_sample_chi2(an, bn);
    r.ks_p_diam = ks2_pvalue(ad, bd);
    r.finish(level);
    return r;
}

} // namespace detail

struct ConsistencyParams {
    McmcConfig outer{};
    McmcConfig inner{};
    double level = 0.01;
    bool gamma_variant = false; // excursion kernel restricted to non-crossing samples
};

struct ConsistencyReport {
    long outer_samples = 0;
    long used_samples = 0; // after the non-crossing selection, if any
    PairedComparison cmp{};
};

// Nested-kernel consistency: draws stationary samples on the outer box, then
// resamples each one's inner-window content conditioned on the rest, and
// compares inner-window observables pairwise.  If the specification is
// consistent the two ensembles share one law; the warm-started inner chain
// then starts stationary, so moderate inner budgets carry no bias.  The
// gamma variant keeps only outer samples with no loop crossing the inner
// boundary (an event measurable from the frozen remainder, so the selection
// commutes with the resampling) and uses the excursion kernel inside.
template <int D>
ConsistencyReport consistency_test(const Box<D>& outer, const Box<D>& inner, const TimeGrid& g,
                                   double mu, const Potential& pot, int j_max, double tail_tol,
                                   const ConsistencyParams& p, std::uint64_t seed) {
    if (!inner.subset_of(outer))
        throw config_error("consistency_test: inner window must lie inside the outer box");
    const auto outer_spec = make_measure_spec(outer, g, mu, j_max, tail_tol);
    const auto inner_spec = make_measure_spec(inner, g, mu, j_max, tail_tol);

    std::vector<Configuration<D>> outer_samples;
    run_kernel<D>(KernelKind::dirichlet, outer_spec, pot, Configuration<D>{}, p.outer,
                  Philox(seed, 0, StreamPurpose::chain),
                  [&](long, const Chain<D>& c) { outer_samples.push_back(c.configuration()); });

    std::vector<detail::WindowObs> a_obs, b_obs;
    std::uint32_t inner_replica = 2;
    ConsistencyReport rep;
    rep.outer_samples = static_cast<long>(outer_samples.size());
    for (const auto& sample : outer_samples) {
        if (p.gamma_variant) {
            bool crossing = false;
            for (const auto& w : sample.loops)
                if (placement(w, inner) == Placement::crossing) {
                    crossing = true;
                    break;
                }
            if (crossing) continue;
        }
        const KernelKind kind =
            p.gamma_variant ? KernelKind::excursion : KernelKind::dirichlet;
        Chain<D> chain(kind, inner_spec, pot, sample, p.inner,
                       Philox(seed, inner_replica++, StreamPurpose::chain));
        chain.run(p.inner.burnin);
        a_obs.push_back(detail::window_observables(sample, inner, pot, g));
        b_obs.push_back(detail::window_observables(chain.configuration(), inner, pot, g));
    }
    rep.used_samples = static_cast<long>(a_obs.size());
    if (rep.used_samples < 100)
        throw chain_error("consistency_test: too few usable samples (" +
                          std::to_string(rep.used_samples) + ")");
    rep.cmp = detail::compare_paired(a_obs, b_obs, p.level);
    return rep;
}

struct KernelEquivReport {
    long outer_samples = 0;
    PairedComparison vs_excursion{};
    PairedComparison vs_free{};
    bool pass = false;
};

// One-step composition check: applying the excursion kernel or the free
// kernel on an inner window to stationary outer samples must reproduce the
// outer statistics on that window.  The excursion leg really exercises the
// excursion machinery, because outer samples routinely cross the inner
// boundary: those loops' interior parts are re-bridged in place.  The free
// leg's resampled paths are not held inside the outer box, a surface-order
// effect far below the test's resolution at these box sizes.
template <int D>
KernelEquivReport kernel_equiv_test(const Box<D>& outer, const Box<D>& inner, const TimeGrid& g,
                                    double mu, const Potential& pot, int j_max, double tail_tol,
                                    const ConsistencyParams& p, std::uint64_t seed) {
    if (!inner.subset_of(outer))
        throw config_error("kernel_equiv_test: inner window must lie inside the outer box");
    const auto outer_spec = make_measure_spec(outer, g, mu, j_max, tail_tol);
    const auto inner_spec = make_measure_spec(inner, g, mu, j_max, tail_tol);

    std::vector<Configuration<D>> outer_samples;
    run_kernel<D>(KernelKind::dirichlet, outer_spec, pot, Configuration<D>{}, p.outer,
                  Philox(seed, 0, StreamPurpose::chain),
                  [&](long, const Chain<D>& c) { outer_samples.push_back(c.configuration()); });

    std::vector<detail::WindowObs> base, exc, fre;
    std::uint32_t replica = 1;
    for (const auto& sample : outer_samples) {
        base.push_back(detail::window_observables(sample, inner, pot, g));
        Chain<D> cexc(KernelKind::excursion, inner_spec, pot, sample, p.inner,
                      Philox(seed, replica++, StreamPurpose::chain));
        cexc.run(p.inner.burnin);
        exc.push_back(detail::window_observables(cexc.configuration(), inner, pot, g));
        Chain<D> cfree(KernelKind::free_bc, inner_spec, pot, sample, p.inner,
                       Philox(seed, replica++, StreamPurpose::chain));
        cfree.run(p.inner.burnin);
        fre.push_back(detail::window_observables(cfree.configuration(), inner, pot, g));
    }
    KernelEquivReport rep;
    rep.outer_samples = static_cast<long>(outer_samples.size());
    rep.vs_excursion = detail::compare_paired(base, exc, p.level);
    rep.vs_free = detail::compare_paired(base, fre, p.level);
    rep.pass = rep.vs_excursion.pass && rep.vs_free.pass;
    return rep;
}

} // namespace loopsoup
