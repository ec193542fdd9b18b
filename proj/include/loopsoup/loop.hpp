#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <vector>

#include "loopsoup/domain.hpp"
#include "loopsoup/errors.hpp"
#include "loopsoup/time_grid.hpp"
#include "loopsoup/vec.hpp"

namespace loopsoup {

// Closed path of j beta-periods sampled on the uniform grid: exactly j*m
// points, cyclic (the edge from the last point back to the first carries the
// final dt of time).  position(k) wraps, so matched-time lookups across
// periods never go out of range.
template <int D>
struct Loop {
    int j = 1;
    std::vector<Vec<D>> points;

    int steps() const { return static_cast<int>(points.size()); }

    const Vec<D>& position(long k) const {
        const long n = static_cast<long>(points.size());
        long r = k % n;
        if (r < 0) r += n;
        return points[static_cast<std::size_t>(r)];
    }

    const Vec<D>& start() const { return points.front(); }
};

template <int D>
inline void check_loop(const Loop<D>& w, const TimeGrid& g, const char* where) {
    if (w.j < 1)
        throw structural_error(std::string(where) + ": loop has nonpositive period count");
    if (w.steps() != w.j * g.steps_per_beta)
        throw structural_error(std::string(where) + ": loop has " + std::to_string(w.steps()) +
                               " points, expected " + std::to_string(w.j * g.steps_per_beta));
}

// Largest pairwise distance among grid points.
template <int D>
inline double diam(const Loop<D>& w) {
    double best = 0;
    const std::size_t n = w.points.size();
    for (std::size_t a = 0; a + 1 < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b)
            best = std::max(best, dist2(w.points[a], w.points[b]));
    return std::sqrt(best);
}

template <int D>
inline Loop<D> translate(Loop<D> w, const Vec<D>& v) {
    for (auto& p : w.points) p += v;
    return w;
}

template <int D>
inline bool started_in(const Loop<D>& w, const Box<D>& box) {
    return box.contains(w.points.front());
}

// Containment trichotomy: inside when every grid point lies in the closed
// box, outside when no grid point lies in the open interior, crossing
// otherwise.
enum class Placement { inside, outside, crossing };

template <int D>
inline Placement placement(const Loop<D>& w, const Box<D>& box) {
    bool all_closed = true, any_interior = false;
    for (const auto& p : w.points) {
        const Region r = box.classify(p);
        if (r == Region::exterior) all_closed = false;
        if (r == Region::interior) any_interior = true;
    }
    if (all_closed) return Placement::inside;
    if (!any_interior) return Placement::outside;
    return Placement::crossing;
}

template <int D>
inline bool touches_boundary(const Loop<D>& w, const Box<D>& box) {
    return std::any_of(w.points.begin(), w.points.end(),
                       [&](const Vec<D>& p) { return box.classify(p) == Region::boundary; });
}

// Finite multiset of loops.
template <int D>
struct Configuration {
    std::vector<Loop<D>> loops;

    std::size_t size() const { return loops.size(); }
    bool empty() const { return loops.empty(); }
};

template <int D>
inline std::vector<std::size_t> indices_started_in(const Configuration<D>& c, const Box<D>& box) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < c.loops.size(); ++i)
        if (started_in(c.loops[i], box)) out.push_back(i);
    return out;
}

template <int D>
inline std::vector<std::size_t> indices_contained_in(const Configuration<D>& c, const Box<D>& box) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < c.loops.size(); ++i)
        if (placement(c.loops[i], box) == Placement::inside) out.push_back(i);
    return out;
}

// Particle count carried by loops started in the window: each loop counts
// its period number.
template <int D>
inline long particle_count(const Configuration<D>& c, const Box<D>& box) {
    long n = 0;
    for (const auto& w : c.loops)
        if (started_in(w, box)) n += w.j;
    return n;
}

// Largest loop diameter over the started-in restriction; 0 for none.
template <int D>
inline double max_diameter(const Configuration<D>& c, const Box<D>& box) {
    double s = 0;
    for (const auto& w : c.loops)
        if (started_in(w, box)) s = std::max(s, diam(w));
    return s;
}

// Per-loop statistic psi for the generic additive observable
// sum over started-in loops of psi(loop).
struct PsiSpec {
    enum class Kind { count, length_power, diameter_power, length_at_least };
    Kind kind = Kind::count;
    double power = 1.0;
    int threshold = 1;
};

template <int D>
inline double psi_value(const PsiSpec& s, const Loop<D>& w) {
    switch (s.kind) {
        case PsiSpec::Kind::count: return 1.0;
        case PsiSpec::Kind::length_power: return std::pow(static_cast<double>(w.j), s.power);
        case PsiSpec::Kind::diameter_power: return std::pow(diam(w), s.power);
        case PsiSpec::Kind::length_at_least: return w.j >= s.threshold ? 1.0 : 0.0;
    }
    return 0.0;
}

template <int D>
inline double psi_sum(const Configuration<D>& c, const Box<D>& box, const PsiSpec& s) {
    double acc = 0;
    for (const auto& w : c.loops)
        if (started_in(w, box)) acc += psi_value(s, w);
    return acc;
}

} // namespace loopsoup
