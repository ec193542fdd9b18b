#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "loopsoup/domain.hpp"
#include "loopsoup/loop.hpp"
#include "loopsoup/rng.hpp"
#include "loopsoup/time_grid.hpp"
#include "loopsoup/vec.hpp"

namespace loopsoup {

// Gaussian transition density p_t(x,y) = (2 pi t)^(-D/2) exp(-|x-y|^2 / 2t).
template <int D>
inline double heat_kernel(const Vec<D>& x, const Vec<D>& y, double t) {
    if (!(t > 0) || !std::isfinite(t))
        throw std::domain_error("heat_kernel: t must be positive and finite");
    constexpr double two_pi = 6.28318530717958647692;
    return std::pow(two_pi * t, -0.5 * D) * std::exp(-dist2(x, y) / (2.0 * t));
}

// Discrete Brownian bridge from x to y over `steps` grid steps, sampled
// sequentially: given the current point with remaining time tau, the next
// point is Gaussian with mean drifting toward the pin,
//   mean = cur + (dt/tau) (y - cur),   var = dt (tau - dt) / tau
// per coordinate.  Both pins are stored exactly; the returned path has
// steps+1 points.  This reproduces the exact finite-dimensional law of the
// bridge on the grid, and the final point is bit-identical to y.
template <int D>
inline std::vector<Vec<D>> sample_bridge_steps(const Vec<D>& x, const Vec<D>& y, int steps,
                                               const TimeGrid& g, Philox& rng) {
    if (steps < 1) throw std::domain_error("sample_bridge: need at least one step");
    const double dt = g.dt();
    std::vector<Vec<D>> pts(static_cast<std::size_t>(steps) + 1);
    pts[0] = x;
    Vec<D> cur = x;
    for (int k = 1; k < steps; ++k) {
        const double tau = static_cast<double>(steps - (k - 1)) * dt;
        const double drift = dt / tau;
        const double sd = std::sqrt(dt * (tau - dt) / tau);
        Vec<D> nxt;
        for (int i = 0; i < D; ++i) nxt[i] = cur[i] + drift * (y[i] - cur[i]) + sd * rng.normal();
        pts[static_cast<std::size_t>(k)] = nxt;
        cur = nxt;
    }
    pts[static_cast<std::size_t>(steps)] = y;
    return pts;
}

// Same, keyed by real duration (must be a positive multiple of dt).
template <int D>
inline std::vector<Vec<D>> sample_bridge(const Vec<D>& x, const Vec<D>& y, double t,
                                         const TimeGrid& g, Philox& rng) {
    return sample_bridge_steps(x, y, duration_to_steps(g, t), g, rng);
}

// Closed loop of j periods anchored at x: a bridge x -> x over j*m steps with
// the duplicate endpoint dropped.
template <int D>
inline Loop<D> sample_loop(const Vec<D>& x, int j, const TimeGrid& g, Philox& rng) {
    if (j < 1) throw std::domain_error("sample_loop: j must be >= 1");
    auto pts = sample_bridge_steps(x, x, j * g.steps_per_beta, g, rng);
    pts.pop_back();
    return Loop<D>{j, std::move(pts)};
}

// Bridge conditioned to stay strictly inside `box` (all points, pins
// included), realized by redrawing up to `cap` times.  Returns nullopt when
// the cap is exhausted; the caller decides whether that is a rejected
// proposal or an error.
template <int D>
inline std::optional<std::vector<Vec<D>>> try_conditioned_bridge(const Vec<D>& x, const Vec<D>& y,
                                                                 int steps, const TimeGrid& g,
                                                                 const Box<D>& box, int cap,
                                                                 Philox& rng) {
    for (int attempt = 0; attempt < cap; ++attempt) {
        auto pts = sample_bridge_steps(x, y, steps, g, rng);
        bool ok = true;
        for (const auto& p : pts)
            if (!box.strictly_inside(p)) {
                ok = false;
                break;
            }
        if (ok) return pts;
    }
    return std::nullopt;
}

// Redraws the strict intermediates of loop positions (s, e) along the cyclic
// index order, pinned at points[s] and points[e], keeping every redrawn point
// strictly inside `box`.  Endpoints are untouched.  Returns false when the
// rejection cap is exhausted (the loop is left unchanged).
template <int D>
inline bool try_rebridge_interior(Loop<D>& w, int s, int e, const TimeGrid& g, const Box<D>& box,
                                  int cap, Philox& rng) {
    const int n = w.steps();
    const int span = (e - s) >= 0 ? (e - s) : (e - s + n); // steps from s to e
    if (span < 2) return true;                             // no free intermediate
    auto pts = try_conditioned_bridge(w.position(s), w.position(e), span, g, box, cap, rng);
    if (!pts) return false;
    for (int k = 1; k < span; ++k) w.points[static_cast<std::size_t>((s + k) % n)] = (*pts)[static_cast<std::size_t>(k)];
    return true;
}

} // namespace loopsoup
