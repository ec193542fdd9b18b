#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "loopsoup/bridge.hpp"
#include "loopsoup/domain.hpp"
#include "loopsoup/errors.hpp"
#include "loopsoup/loop.hpp"
#include "loopsoup/rng.hpp"
#include "loopsoup/time_grid.hpp"

namespace loopsoup {

// Splitting a loop at a box boundary, at grid resolution.
//
// Grid points are classified strictly inside / strictly outside; a point
// exactly on the boundary is a structural error (samplers redraw such paths,
// so split only ever sees them in hand-built data).  A fragment owns one
// maximal same-side cyclic run of points PLUS the first point of the next
// run, so consecutive fragments share an endpoint bit-identically and the
// shared points carry the crossing edges.  Hence:
//     points.size() == steps + 1,   duration == steps * dt,
// and the step counts over one loop sum to j*m exactly.
//
// The boundary-data triple of an interior fragment records (first interior
// point, last interior point, steps * dt): both recorded points lie strictly
// inside the box and stand in for the continuum entry/exit boundary points.
// Note the deliberate asymmetry: the triple's exit is the fragment's
// second-to-last point, because the fragment itself carries one exterior
// point for gluing.
enum class Side { interior, exterior };

template <int D>
struct Fragment {
    Side side = Side::interior;
    bool cyclic = false; // whole loop on one side
    int steps = 0;       // run length in grid steps
    int source_step = -1; // index of points.front() in the source loop, -1 if foreign
    int source_loop = -1; // index of the source loop within the originating split
    std::vector<Vec<D>> points;

    const Vec<D>& start() const { return points.front(); }
    const Vec<D>& end() const { return points.back(); }
    double duration(const TimeGrid& g) const { return steps * g.dt(); }
};

template <int D>
struct BoundaryTriple {
    Vec<D> entry{};
    Vec<D> exit{};
    int steps = 0;
    double duration(const TimeGrid& g) const { return steps * g.dt(); }
};

template <int D>
using BoundaryData = std::vector<BoundaryTriple<D>>;

template <int D>
struct SplitResult {
    std::vector<Fragment<D>> interior;
    std::vector<Fragment<D>> exterior;
    BoundaryData<D> bd;
};

namespace detail {

template <int D>
inline void split_one(const Loop<D>& w, const Box<D>& box, int loop_index, SplitResult<D>& out) {
    const int n = w.steps();
    std::vector<char> inside(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const Region r = box.classify(w.points[static_cast<std::size_t>(k)]);
        if (r == Region::boundary)
            throw structural_error("split: grid point " + std::to_string(k) +
                                   " lies exactly on the box boundary");
        inside[static_cast<std::size_t>(k)] = (r == Region::interior) ? 1 : 0;
    }

    // Uniform loop: one cyclic fragment, and no boundary data.
    bool mixed = false;
    for (int k = 1; k < n && !mixed; ++k) mixed = inside[static_cast<std::size_t>(k)] != inside[0];
    if (!mixed) {
        Fragment<D> f;
        f.side = inside[0] ? Side::interior : Side::exterior;
        f.cyclic = true;
        f.steps = n;
        f.source_step = 0;
        f.source_loop = loop_index;
        f.points = w.points;
        f.points.push_back(w.points.front());
        (inside[0] ? out.interior : out.exterior).push_back(std::move(f));
        return;
    }

    // First run start: the smallest index where the side changes.
    int first = -1;
    for (int k = 0; k < n; ++k) {
        const int prev = (k + n - 1) % n;
        if (inside[static_cast<std::size_t>(k)] != inside[static_cast<std::size_t>(prev)]) {
            first = k;
            break;
        }
    }

    int s = first;
    int consumed = 0;
    while (consumed < n) {
        const char side_flag = inside[static_cast<std::size_t>(s)];
        int r = 1;
        while (r < n && inside[static_cast<std::size_t>((s + r) % n)] == side_flag) ++r;
        Fragment<D> f;
        f.side = side_flag ? Side::interior : Side::exterior;
        f.cyclic = false;
        f.steps = r;
        f.source_step = s;
        f.source_loop = loop_index;
        f.points.reserve(static_cast<std::size_t>(r) + 1);
        for (int k = 0; k <= r; ++k) f.points.push_back(w.position(s + k));
        if (side_flag) {
            out.bd.push_back(BoundaryTriple<D>{f.points.front(),
                                               f.points[static_cast<std::size_t>(r - 1)], r});
            out.interior.push_back(std::move(f));
        } else {
            out.exterior.push_back(std::move(f));
        }
        s = (s + r) % n;
        consumed += r;
    }
}

} // namespace detail

template <int D>
inline SplitResult<D> split_excursions(const Loop<D>& w, const Box<D>& box) {
    SplitResult<D> out;
    detail::split_one(w, box, 0, out);
    return out;
}

template <int D>
inline SplitResult<D> split_excursions(const Configuration<D>& c, const Box<D>& box) {
    SplitResult<D> out;
    for (std::size_t i = 0; i < c.loops.size(); ++i)
        detail::split_one(c.loops[i], box, static_cast<int>(i), out);
    return out;
}

// Reassembles loops from fragments by exact endpoint matching (fragments
// produced by split share endpoints bit-for-bit).  The source_step indices
// recover the original rotation, so glue(split(w)) returns w with the
// identical point sequence; a fragment multiset that does not tile complete
// loops is a structural error.
template <int D>
inline std::vector<Loop<D>> glue(const std::vector<Fragment<D>>& interior,
                                 const std::vector<Fragment<D>>& exterior, const TimeGrid& g) {
    std::vector<const Fragment<D>*> pool;
    for (const auto& f : interior) pool.push_back(&f);
    for (const auto& f : exterior) pool.push_back(&f);

    std::vector<Loop<D>> loops;
    std::vector<char> used(pool.size(), 0);

    // Cyclic fragments reconstruct directly.
    for (std::size_t i = 0; i < pool.size(); ++i) {
        const Fragment<D>& f = *pool[i];
        if (!f.cyclic) continue;
        used[i] = 1;
        if (f.steps < 1 || f.points.size() != static_cast<std::size_t>(f.steps) + 1 ||
            f.points.front() != f.points.back())
            throw structural_error("glue: malformed cyclic fragment");
        if (f.steps % g.steps_per_beta != 0)
            throw structural_error("glue: cyclic fragment step count is not a multiple of m");
        Loop<D> w;
        w.j = f.steps / g.steps_per_beta;
        w.points.assign(f.points.begin(), f.points.end() - 1);
        loops.push_back(std::move(w));
    }

    // Chain the rest into cycles.
    for (std::size_t i0 = 0; i0 < pool.size(); ++i0) {
        if (used[i0]) continue;
        std::vector<const Fragment<D>*> cycle;
        std::size_t cur = i0;
        for (;;) {
            used[cur] = 1;
            cycle.push_back(pool[cur]);
            const Fragment<D>& fc = *pool[cur];
            if (fc.points.size() != static_cast<std::size_t>(fc.steps) + 1 || fc.steps < 1)
                throw structural_error("glue: fragment point count does not match its step count");
            if (fc.end() == pool[i0]->start() && cycle.size() > 0) {
                // candidate closure; only accept if no better continuation is
                // required, i.e. treat the cycle as closed
                break;
            }
            std::size_t next = pool.size();
            int candidates = 0;
            for (std::size_t k = 0; k < pool.size(); ++k) {
                if (used[k] || pool[k]->cyclic) continue;
                if (pool[k]->start() == fc.end()) {
                    ++candidates;
                    if (next == pool.size() ||
                        (pool[k]->source_loop == fc.source_loop &&
                         pool[k]->source_step == fc.source_step + fc.steps))
                        next = k;
                }
            }
            if (next == pool.size())
                throw structural_error("glue: fragment endpoint has no unused match");
            if (candidates > 1 && pool[next]->source_loop >= 0 && fc.source_loop >= 0 &&
                pool[next]->source_loop != fc.source_loop)
                throw structural_error("glue: ambiguous fragment endpoint match");
            cur = next;
        }

        long total = 0;
        for (const auto* f : cycle) total += f->steps;
        if (total % g.steps_per_beta != 0)
            throw structural_error("glue: cycle step count is not a multiple of m");
        const int n = static_cast<int>(total);

        // Recover the rotation from source indices when available.
        bool have_rotation = true;
        for (const auto* f : cycle)
            if (f->source_step < 0) have_rotation = false;
        Loop<D> w;
        w.j = n / g.steps_per_beta;
        w.points.assign(static_cast<std::size_t>(n), Vec<D>{});
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        int running = 0;
        for (const auto* f : cycle) {
            const int base = have_rotation ? f->source_step : running;
            for (int k = 0; k < f->steps; ++k) {
                const int idx = (base + k) % n;
                if (seen[static_cast<std::size_t>(idx)])
                    throw structural_error("glue: fragments overlap at step " + std::to_string(idx));
                seen[static_cast<std::size_t>(idx)] = 1;
                w.points[static_cast<std::size_t>(idx)] = f->points[static_cast<std::size_t>(k)];
            }
            running += f->steps;
        }
        for (int k = 0; k < n; ++k)
            if (!seen[static_cast<std::size_t>(k)])
                throw structural_error("glue: fragments leave step " + std::to_string(k) + " uncovered");
        loops.push_back(std::move(w));
    }
    return loops;
}

// Independent redraw of interior excursions from boundary data: for each
// triple, a bridge entry -> exit of the triple's full duration with every
// point strictly inside the box, realized by rejection.
template <int D>
struct ResampleReport {
    std::vector<Fragment<D>> fragments;    // one per triple, in order (failures skipped)
    std::vector<std::size_t> failed;       // triple indices whose cap was exhausted
};

enum class OnCapExhausted { abort, skip };

template <int D>
inline ResampleReport<D> resample_excursions(const Box<D>& box, const BoundaryData<D>& bd,
                                             const TimeGrid& g, int cap, OnCapExhausted policy,
                                             Philox& rng) {
    ResampleReport<D> out;
    for (std::size_t i = 0; i < bd.size(); ++i) {
        const auto& triple = bd[i];
        if (!box.strictly_inside(triple.entry) || !box.strictly_inside(triple.exit))
            throw std::domain_error("resample_excursions: triple endpoints must lie inside the box");
        if (triple.steps < 1)
            throw std::domain_error("resample_excursions: triple duration must be positive");
        auto pts = try_conditioned_bridge(triple.entry, triple.exit, triple.steps, g, box, cap, rng);
        if (!pts) {
            if (policy == OnCapExhausted::abort)
                throw chain_error("resample_excursions: rejection cap exhausted on triple " +
                                  std::to_string(i));
            out.failed.push_back(i);
            continue;
        }
        Fragment<D> f;
        f.side = Side::interior;
        f.cyclic = false;
        f.steps = triple.steps;
        f.points = std::move(*pts);
        out.fragments.push_back(std::move(f));
    }
    return out;
}

} // namespace loopsoup
