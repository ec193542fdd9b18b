#pragma once

#include <cmath>
#include <limits>
#include <vector>

#include "loopsoup/domain.hpp"
#include "loopsoup/errors.hpp"
#include "loopsoup/loop.hpp"
#include "loopsoup/potential.hpp"
#include "loopsoup/time_grid.hpp"

namespace loopsoup {

inline constexpr double inf_energy = std::numeric_limits<double>::infinity();

// Axis-aligned bounding box of a loop, used to screen pairs whose minimum
// separation already exceeds the potential's range.
template <int D>
struct Aabb {
    Vec<D> lo{}, hi{};
};

template <int D>
inline Aabb<D> bounding_box(const Loop<D>& w) {
    Aabb<D> b;
    b.lo = b.hi = w.points.front();
    for (const auto& p : w.points)
        for (int i = 0; i < D; ++i) {
            if (p[i] < b.lo[i]) b.lo[i] = p[i];
            if (p[i] > b.hi[i]) b.hi[i] = p[i];
        }
    return b;
}

template <int D>
inline double aabb_min_dist2(const Aabb<D>& a, const Aabb<D>& b) {
    double s = 0;
    for (int i = 0; i < D; ++i) {
        double gap = 0;
        if (a.hi[i] < b.lo[i]) gap = b.lo[i] - a.hi[i];
        else if (b.hi[i] < a.lo[i]) gap = a.lo[i] - b.hi[i];
        s += gap * gap;
    }
    return s;
}

// Pair interaction of two loops on the shared grid:
//   T = sum over period pairs (n, nt) of  int_0^beta phi(|a(n beta + s) - b(nt beta + s)|) ds,
// left-endpoint rule, i.e. dt * sum over all index pairs congruent mod m.
// Returns +inf as soon as any term is infinite.
template <int D>
inline double pair_T(const Loop<D>& a, const Loop<D>& b, const Potential& pot, const TimeGrid& g) {
    check_loop(a, g, "pair_T");
    check_loop(b, g, "pair_T");
    if (pot.family() == Potential::Family::zero) return 0.0;
    const int m = g.steps_per_beta;
    double acc = 0;
    for (int k = 0; k < m; ++k)
        for (int na = 0; na < a.j; ++na) {
            const Vec<D>& pa = a.points[static_cast<std::size_t>(na * m + k)];
            for (int nb = 0; nb < b.j; ++nb) {
                const double v =
                    pot.phi(dist(pa, b.points[static_cast<std::size_t>(nb * m + k)]));
                if (v == inf_energy) return inf_energy;
                acc += v;
            }
        }
    return acc * g.dt();
}

// Screened variant used by the chain cache: exact, but returns 0 without
// touching the points when the bounding boxes are separated by more than the
// potential's range.
template <int D>
inline double pair_T_screened(const Loop<D>& a, const Aabb<D>& abox, const Loop<D>& b,
                              const Aabb<D>& bbox, const Potential& pot, const TimeGrid& g) {
    const double r = pot.range();
    if (std::isfinite(r) && aabb_min_dist2(abox, bbox) > r * r) return 0.0;
    return pair_T(a, b, pot, g);
}

// Self interaction: half the sum over ordered distinct period pairs, which
// equals the plain sum over unordered pairs.  Zero for a single period.
template <int D>
inline double self_W(const Loop<D>& w, const Potential& pot, const TimeGrid& g) {
    check_loop(w, g, "self_W");
    if (w.j < 2 || pot.family() == Potential::Family::zero) return 0.0;
    const int m = g.steps_per_beta;
    double acc = 0;
    for (int k = 0; k < m; ++k)
        for (int na = 0; na < w.j; ++na) {
            const Vec<D>& pa = w.points[static_cast<std::size_t>(na * m + k)];
            for (int nb = na + 1; nb < w.j; ++nb) {
                const double v =
                    pot.phi(dist(pa, w.points[static_cast<std::size_t>(nb * m + k)]));
                if (v == inf_energy) return inf_energy;
                acc += v;
            }
        }
    return acc * g.dt();
}

// Sum of pair interactions between two configurations.  When both arguments
// are the same object, each unordered pair inside it is counted twice and
// self-pairs are skipped, matching the convention that the cross term of a
// configuration against itself is twice its internal pair energy.
template <int D>
inline double cross_U(const Configuration<D>& a, const Configuration<D>& b, const Potential& pot,
                      const TimeGrid& g) {
    const bool same = &a == &b;
    double acc = 0;
    for (std::size_t i = 0; i < a.loops.size(); ++i)
        for (std::size_t k = 0; k < b.loops.size(); ++k) {
            if (same && i == k) continue;
            const double v = pair_T(a.loops[i], b.loops[k], pot, g);
            if (v == inf_energy) return inf_energy;
            acc += v;
        }
    return acc;
}

// Which loops of a configuration count as "the window part" of the energy.
enum class Restriction { started_in, contained_in };

struct EnergyBreakdown {
    double self = 0;          // sum of W over window loops
    double pair_internal = 0; // unordered pairs of window loops
    double pair_boundary = 0; // window loops against the rest of the configuration
    double total() const { return self + pair_internal + pair_boundary; }
};

// Full window Hamiltonian of a configuration:
//   H = sum_W(window) + sum over unordered window pairs of T
//     + sum over (window, complement) pairs of T.
// Complement-complement terms are excluded by definition.
template <int D>
inline EnergyBreakdown hamiltonian(const Configuration<D>& c, const Box<D>& box,
                                   const Potential& pot, const TimeGrid& g,
                                   Restriction restriction = Restriction::started_in) {
    std::vector<char> in_window(c.loops.size());
    for (std::size_t i = 0; i < c.loops.size(); ++i)
        in_window[i] = (restriction == Restriction::started_in)
                           ? started_in(c.loops[i], box)
                           : (placement(c.loops[i], box) == Placement::inside);

    EnergyBreakdown out;
    for (std::size_t i = 0; i < c.loops.size(); ++i) {
        if (!in_window[i]) continue;
        const double w = self_W(c.loops[i], pot, g);
        if (w == inf_energy) return EnergyBreakdown{inf_energy, 0, 0};
        out.self += w;
    }
    for (std::size_t i = 0; i < c.loops.size(); ++i)
        for (std::size_t k = i + 1; k < c.loops.size(); ++k) {
            if (!in_window[i] && !in_window[k]) continue;
            const double t = pair_T(c.loops[i], c.loops[k], pot, g);
            if (t == inf_energy) {
                EnergyBreakdown bad;
                if (in_window[i] && in_window[k]) bad.pair_internal = inf_energy;
                else bad.pair_boundary = inf_energy;
                return bad;
            }
            if (in_window[i] && in_window[k]) out.pair_internal += t;
            else out.pair_boundary += t;
        }
    return out;
}

} // namespace loopsoup
