#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "loopsoup/bridge.hpp"
#include "loopsoup/domain.hpp"
#include "loopsoup/energy.hpp"
#include "loopsoup/errors.hpp"
#include "loopsoup/loop.hpp"
#include "loopsoup/potential.hpp"
#include "loopsoup/rng.hpp"
#include "loopsoup/time_grid.hpp"

namespace loopsoup {

// Reference loop measure over a box: intensity
//   M(dx, j, dpath) = e^{beta mu j} (2 pi beta j)^{-D/2} / j  dx  B_j(dpath),
// where B_j is the normalized bridge of duration beta j anchored at x.  The
// chemical-potential factor is folded into the per-j weights so every birth
// proposal downstream reduces to a pure energy ratio.  The series is
// truncated at j_max with a certified tail bound:
//   sum_{j>J} e^{beta mu j} j^{-D/2-1}  <=  e^{beta mu (J+1)} (2/D) J^{-D/2}   (mu <= 0),
// and for mu > 0 a geometric bound using a user-supplied decay-rate estimate
// c_hat > beta mu:  sum_{j>J} e^{(beta mu - c_hat) j} <= e^{(beta mu - c_hat)(J+1)} / (1 - e^{beta mu - c_hat}).
template <int D>
struct LoopMeasureSpec {
    Box<D> box{};
    TimeGrid grid{};
    double mu = 0;
    int j_max = 64;
    double tail_tol = 1e-8;
    std::optional<double> cphi_hat{}; // certifies the tail when mu > 0

    std::vector<double> weights;    // w_j, index 0 <-> j = 1
    std::vector<double> cumulative; // prefix sums of weights
    double weight_sum = 0;
    double tail_bound = 0;

    double volume() const { return box.volume(); }
};

template <int D>
inline LoopMeasureSpec<D> make_measure_spec(const Box<D>& box, const TimeGrid& g, double mu,
                                            int j_max, double tail_tol = 1e-8,
                                            std::optional<double> cphi_hat = std::nullopt) {
    if (j_max < 1) throw config_error("measure: j_max must be >= 1");
    if (!(tail_tol > 0)) throw config_error("measure: tail tolerance must be positive");
    LoopMeasureSpec<D> spec;
    spec.box = box;
    spec.grid = g;
    spec.mu = mu;
    spec.j_max = j_max;
    spec.tail_tol = tail_tol;
    spec.cphi_hat = cphi_hat;

    constexpr double two_pi = 6.28318530717958647692;
    spec.weights.resize(static_cast<std::size_t>(j_max));
    spec.cumulative.resize(static_cast<std::size_t>(j_max));
    double acc = 0;
    for (int j = 1; j <= j_max; ++j) {
        const double w = std::exp(g.beta * mu * j) * std::pow(two_pi * g.beta * j, -0.5 * D) / j;
        spec.weights[static_cast<std::size_t>(j - 1)] = w;
        acc += w;
        spec.cumulative[static_cast<std::size_t>(j - 1)] = acc;
    }
    spec.weight_sum = acc;

    const double bmu = g.beta * mu;
    const double pref = std::pow(two_pi * g.beta, -0.5 * D);
    if (bmu <= 0) {
        spec.tail_bound = pref * std::exp(bmu * (j_max + 1)) * (2.0 / D) *
                          std::pow(static_cast<double>(j_max), -0.5 * D);
    } else {
        if (!cphi_hat)
            throw config_error(
                "measure: mu > 0 needs a decay-rate estimate (cphi_hat) to certify the weight tail");
        const double gap = bmu - *cphi_hat;
        if (gap >= 0)
            throw config_error("measure: beta*mu >= cphi_hat, the weight tail cannot be certified");
        spec.tail_bound = pref * std::exp(gap * (j_max + 1)) / (1.0 - std::exp(gap));
    }
    if (spec.tail_bound > tail_tol)
        throw config_error("measure: weight tail bound " + std::to_string(spec.tail_bound) +
                           " exceeds tolerance " + std::to_string(tail_tol) +
                           " at j_max = " + std::to_string(j_max));
    return spec;
}

// Total mass of the (mu-weighted, truncated) measure: |box| * sum_j w_j.
template <int D>
inline double measure_mass(const LoopMeasureSpec<D>& spec) {
    return spec.volume() * spec.weight_sum;
}

// Expected particle count sum_j j w_j |box| of the free reference process.
template <int D>
inline double expected_particles(const LoopMeasureSpec<D>& spec) {
    double s = 0;
    for (int j = 1; j <= spec.j_max; ++j)
        s += j * spec.weights[static_cast<std::size_t>(j - 1)];
    return spec.volume() * s;
}

// One loop drawn from the normalized intensity: anchor uniform in the box,
// period count proportional to w_j, path a free bridge.  Paths that touch
// the box boundary exactly (a null event) are redrawn so downstream
// containment tests stay two-sided.
template <int D>
inline Loop<D> sample_intensity_loop(const LoopMeasureSpec<D>& spec, Philox& rng) {
    Vec<D> x;
    for (int i = 0; i < D; ++i) x[i] = rng.uniform(spec.box.lower[i], spec.box.upper[i]);
    const int j = static_cast<int>(rng.discrete(spec.cumulative)) + 1;
    for (int attempt = 0; attempt < 64; ++attempt) {
        Loop<D> w = sample_loop(x, j, spec.grid, rng);
        if (!touches_boundary(w, spec.box)) return w;
    }
    throw chain_error("sample_intensity_loop: repeated exact boundary touches");
}

// Poisson process with the free (started-in) intensity.
template <int D>
inline Configuration<D> sample_free(const LoopMeasureSpec<D>& spec, Philox& rng) {
    Configuration<D> c;
    const long n = rng.poisson(measure_mass(spec));
    c.loops.reserve(static_cast<std::size_t>(n));
    for (long i = 0; i < n; ++i) c.loops.push_back(sample_intensity_loop(spec, rng));
    return c;
}

// Poisson process restricted to loops contained in the box, by thinning the
// free sample (thinning a Poisson process is Poisson).
template <int D>
inline Configuration<D> sample_dirichlet(const LoopMeasureSpec<D>& spec, Philox& rng) {
    Configuration<D> c = sample_free(spec, rng);
    std::vector<Loop<D>> kept;
    for (auto& w : c.loops)
        if (placement(w, spec.box) == Placement::inside) kept.push_back(std::move(w));
    c.loops = std::move(kept);
    return c;
}

// Poisson process whose intensity additionally carries the single-loop
// Boltzmann factor e^{-beta W}: contained candidates kept with that
// probability (a second exact thinning).
template <int D>
inline Configuration<D> sample_ph(const LoopMeasureSpec<D>& spec, const Potential& pot,
                                  Philox& rng) {
    Configuration<D> c = sample_dirichlet(spec, rng);
    std::vector<Loop<D>> kept;
    for (auto& w : c.loops) {
        const double e = self_W(w, pot, spec.grid);
        const double p = std::exp(-spec.grid.beta * e); // exp(-inf) == 0 exactly
        if (rng.u01() <= p) kept.push_back(std::move(w));
    }
    c.loops = std::move(kept);
    return c;
}

} // namespace loopsoup
