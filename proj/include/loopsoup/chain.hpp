#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "loopsoup/bridge.hpp"
#include "loopsoup/domain.hpp"
#include "loopsoup/energy.hpp"
#include "loopsoup/errors.hpp"
#include "loopsoup/excursion.hpp"
#include "loopsoup/loop.hpp"
#include "loopsoup/measure.hpp"
#include "loopsoup/potential.hpp"
#include "loopsoup/rng.hpp"

namespace loopsoup {

enum class KernelKind { dirichlet, free_bc, excursion };

struct McmcConfig {
    long steps = 100000;       // post-burn-in steps
    long burnin = 10000;
    int thinning = 10;
    double p_birth = 0.35;
    double p_death = 0.35;
    double p_rebridge = 0.30;
    int rejection_cap = 256;   // conditioned-bridge redraw cap
    long recheck_interval = 4096; // accepted moves between cache audits
    bool warm_start = true;
};

inline void validate(const McmcConfig& c) {
    if (c.steps < 1 || c.burnin < 0 || c.thinning < 1)
        throw config_error("mcmc: steps >= 1, burnin >= 0, thinning >= 1 required");
    if (c.p_birth < 0 || c.p_death < 0 || c.p_rebridge < 0 ||
        std::abs(c.p_birth + c.p_death + c.p_rebridge - 1.0) > 1e-9)
        throw config_error("mcmc: move probabilities must be nonnegative and sum to 1");
    if (c.rejection_cap < 1 || c.recheck_interval < 1)
        throw config_error("mcmc: rejection_cap and recheck_interval must be positive");
}

enum class MoveKind { birth, death, rebridge, exc_rebridge };

struct MoveRecord {
    MoveKind kind{};
    long n_before = 0;   // killable loop count before the move
    double delta_h = 0;  // cached energy change of the proposal (+inf allowed)
    double ratio = 0;    // full Metropolis ratio before min(1, .)
    double u = 0;        // the uniform used
    bool accepted = false;
};

struct Tallies {
    long proposed[4] = {0, 0, 0, 0};
    long accepted[4] = {0, 0, 0, 0};
    long cap_failures = 0;  // conditioned-bridge caps exhausted (counted rejected)
    long no_target = 0;     // death/rebridge drawn with nothing to act on

    double rate(MoveKind k) const {
        const auto i = static_cast<std::size_t>(k);
        return proposed[i] > 0 ? static_cast<double>(accepted[i]) / proposed[i] : 0.0;
    }
};

// Metropolis-Hastings sampler for the Gibbs-weighted loop configurations in
// a box, against one of three reference processes:
//
//   dirichlet: contained loops, reference = restricted Poisson process.
//     Birth proposals come from the unrestricted intensity (closed-form
//     mass); a proposal not contained in the box has target weight zero and
//     is auto-rejected, which is exactly the thinned reference.
//   free_bc:   started-in loops, unrestricted paths, same proposal flow with
//     every placement admissible.
//   excursion: contained loops are born/killed/re-bridged as in dirichlet;
//     additionally, each interior excursion of the frozen crossing loops is
//     re-bridged in place between its pinned entry/exit points, conditioned
//     to stay inside the box.  Exterior fragments and the boundary data
//     (entry, exit, duration) never change.
//
// Energies use the window Hamiltonian with the started-in restriction.  The
// cache carries per-slot self energies, the full pair matrix among mutable
// loops, and each mutable loop's interaction with the frozen remainder,
// split by window membership; frozen-frozen terms are constants and excluded
// throughout.  Every acceptance uses a cached delta; a full recompute audits
// the cache every recheck_interval accepted moves and on demand, with a
// 1e-9 relative drift tolerance.
template <int D>
class Chain {
  public:
    Chain(KernelKind kind, const LoopMeasureSpec<D>& spec, const Potential& pot,
          const Configuration<D>& conditioning, const McmcConfig& cfg, Philox rng)
        : kind_(kind), spec_(spec), pot_(pot), cfg_(cfg), rng_(std::move(rng)),
          mass_(measure_mass(spec)) {
        validate(cfg_);
        build_from(conditioning);
    }

    const Box<D>& domain() const { return spec_.box; }
    const TimeGrid& grid() const { return spec_.grid; }
    double beta() const { return spec_.grid.beta; }

    long killable_count() const { return static_cast<long>(slots_.size() - fixed_count_); }
    const Tallies& tallies() const { return tallies_; }

    void set_move_log(std::vector<MoveRecord>* log) { log_ = log; }

    // One proposed move.
    void step() {
        const double u = rng_.u01o();
        if (u < cfg_.p_birth) birth();
        else if (u < cfg_.p_birth + cfg_.p_death) death();
        else rebridge();
        ++steps_done_;
    }

    void run(long steps) {
        for (long s = 0; s < steps; ++s) step();
    }

    // Full configuration: conditioning remainder plus the current resampled
    // content, frozen loops first.
    Configuration<D> configuration() const {
        Configuration<D> c;
        c.loops.reserve(frozen_.size() + slots_.size());
        for (const auto& w : frozen_) c.loops.push_back(w);
        for (const auto& s : slots_) c.loops.push_back(s.loop);
        return c;
    }

    Configuration<D> interior_configuration() const {
        Configuration<D> c;
        for (const auto& s : slots_) c.loops.push_back(s.loop);
        return c;
    }

    // Cached window-energy totals over the mutable content (frozen-frozen
    // constants excluded; see class comment).
    EnergyBreakdown breakdown() const {
        return EnergyBreakdown{self_sum_, pair_int_sum_, pair_bnd_sum_};
    }

    double cached_total() const { return self_sum_ + pair_int_sum_ + pair_bnd_sum_; }

    // Rebuilds the cache from scratch and compares; throws on drift beyond
    // the tolerance.  Returns the fresh total.
    double audit_cache(double rel_tol = 1e-9) {
        const double before = cached_total();
        rebuild_cache();
        const double after = cached_total();
        const double scale = std::max({std::abs(before), std::abs(after), 1.0});
        if (std::abs(before - after) > rel_tol * scale)
            throw chain_error("chain: cached energy drifted by " +
                              std::to_string(std::abs(before - after)) + " (relative tolerance " +
                              std::to_string(rel_tol) + ")");
        return after;
    }

    std::uint64_t accepted_moves() const { return accepted_total_; }

  private:
    struct Slot {
        Loop<D> loop;
        bool in_window = true; // started in the box
        bool killable = true;
        std::vector<std::pair<int, int>> excursions; // (entry, exit) indices, crossing slots only
        double w_self = 0;
        double b_int = 0;   // T against frozen loops started in the box
        double b_cross = 0; // T against frozen loops started outside
        Aabb<D> aabb{};
    };

    void build_from(const Configuration<D>& conditioning) {
        for (const auto& w : conditioning.loops) {
            check_loop(w, spec_.grid, "chain conditioning");
            const Placement pl = placement(w, spec_.box);
            bool take_mutable = false, take_crossing = false;
            switch (kind_) {
                case KernelKind::dirichlet:
                    take_mutable = (pl == Placement::inside);
                    break;
                case KernelKind::free_bc:
                    take_mutable = started_in(w, spec_.box);
                    break;
                case KernelKind::excursion:
                    take_mutable = (pl == Placement::inside);
                    take_crossing = (pl == Placement::crossing);
                    break;
            }
            if (take_crossing) {
                Slot s;
                s.loop = w;
                s.in_window = started_in(w, spec_.box);
                s.killable = false;
                s.excursions = interior_runs(w);
                slots_.push_back(std::move(s));
            } else if (take_mutable && cfg_.warm_start) {
                Slot s;
                s.loop = w;
                s.in_window = true;
                s.killable = true;
                slots_.push_back(std::move(s));
            } else if (take_mutable) {
                // cold start: drop, the chain regrows this coordinate
            } else {
                frozen_.push_back(w);
            }
        }
        // Crossing slots first so killable slots form a removable suffix.
        std::stable_partition(slots_.begin(), slots_.end(),
                              [](const Slot& s) { return !s.killable; });
        fixed_count_ = 0;
        while (fixed_count_ < slots_.size() && !slots_[fixed_count_].killable) ++fixed_count_;
        for (std::size_t i = fixed_count_; i < slots_.size(); ++i)
            if (!slots_[i].killable) throw chain_error("chain: slot partition failed");

        exc_units_.clear();
        for (std::size_t i = 0; i < fixed_count_; ++i)
            for (std::size_t e = 0; e < slots_[i].excursions.size(); ++e) {
                const auto [s, t] = slots_[i].excursions[e];
                const int span = cyclic_span(slots_[i].loop.steps(), s, t);
                if (span >= 2) exc_units_.push_back({i, e});
            }

        rebuild_cache();
        if (!std::isfinite(cached_total()))
            throw chain_error("chain: initial configuration has infinite energy (no admissible start)");
    }

    // Maximal runs of strictly-interior points of a crossing loop, as
    // (first interior index, last interior index) pairs in cyclic order.
    std::vector<std::pair<int, int>> interior_runs(const Loop<D>& w) const {
        const int n = w.steps();
        std::vector<char> inside(static_cast<std::size_t>(n));
        for (int k = 0; k < n; ++k) {
            const Region r = spec_.box.classify(w.points[static_cast<std::size_t>(k)]);
            if (r == Region::boundary)
                throw structural_error("chain: conditioning loop touches the box boundary exactly");
            inside[static_cast<std::size_t>(k)] = (r == Region::interior) ? 1 : 0;
        }
        std::vector<std::pair<int, int>> runs;
        int first = -1;
        for (int k = 0; k < n; ++k)
            if (inside[static_cast<std::size_t>(k)] &&
                !inside[static_cast<std::size_t>((k + n - 1) % n)]) {
                first = k;
                break;
            }
        if (first < 0) throw structural_error("chain: crossing loop without interior run");
        int s = first;
        do {
            int r = 1;
            while (inside[static_cast<std::size_t>((s + r) % n)]) ++r;
            runs.push_back({s, (s + r - 1) % n});
            // advance to the next interior run start
            int t = (s + r) % n;
            while (!inside[static_cast<std::size_t>(t)]) t = (t + 1) % n;
            s = t;
        } while (s != first);
        return runs;
    }

    static int cyclic_span(int n, int s, int e) { return (e - s) >= 0 ? (e - s) : (e - s + n); }

    void rebuild_cache() {
        const std::size_t n = slots_.size();
        T_.assign(n, std::vector<double>(n, 0.0));
        self_sum_ = pair_int_sum_ = pair_bnd_sum_ = 0;
        for (auto& s : slots_) {
            s.aabb = bounding_box(s.loop);
            s.w_self = self_W(s.loop, pot_, spec_.grid);
            s.b_int = s.b_cross = 0;
            for (const auto& b : frozen_) {
                const double t = pair_T_screened(s.loop, s.aabb, b, bounding_box(b), pot_, spec_.grid);
                (started_in(b, spec_.box) ? s.b_int : s.b_cross) += t;
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = i + 1; k < n; ++k) {
                const double t = pair_T_screened(slots_[i].loop, slots_[i].aabb, slots_[k].loop,
                                                 slots_[k].aabb, pot_, spec_.grid);
                T_[i][k] = T_[k][i] = t;
            }
        for (std::size_t i = 0; i < n; ++i) {
            const Slot& s = slots_[i];
            if (s.in_window) {
                self_sum_ += s.w_self;
                pair_int_sum_ += s.b_int;
                pair_bnd_sum_ += s.b_cross;
            } else {
                pair_bnd_sum_ += s.b_int;
            }
            for (std::size_t k = i + 1; k < n; ++k) {
                if (s.in_window && slots_[k].in_window) pair_int_sum_ += T_[i][k];
                else if (s.in_window || slots_[k].in_window) pair_bnd_sum_ += T_[i][k];
            }
        }
    }

    // Interaction of a fresh window loop with everything tracked; +inf
    // short-circuits.
    double interaction_with_all(const Loop<D>& w, const Aabb<D>& box,
                                std::vector<double>& row_out, double& b_int_out,
                                double& b_cross_out) const {
        double acc = 0;
        row_out.assign(slots_.size(), 0.0);
        for (std::size_t k = 0; k < slots_.size(); ++k) {
            const double t = pair_T_screened(w, box, slots_[k].loop, slots_[k].aabb, pot_, spec_.grid);
            if (t == inf_energy) return inf_energy;
            row_out[k] = t;
            acc += t;
        }
        b_int_out = b_cross_out = 0;
        for (const auto& b : frozen_) {
            const double t = pair_T_screened(w, box, b, bounding_box(b), pot_, spec_.grid);
            if (t == inf_energy) return inf_energy;
            (started_in(b, spec_.box) ? b_int_out : b_cross_out) += t;
        }
        return acc + b_int_out + b_cross_out;
    }

    void log_move(MoveKind kind, long nb, double dh, double ratio, double u, bool acc) {
        if (log_) log_->push_back(MoveRecord{kind, nb, dh, ratio, u, acc});
    }

    void note_accept() {
        ++accepted_total_;
        if (accepted_total_ % static_cast<std::uint64_t>(cfg_.recheck_interval) == 0) audit_cache();
    }

    void birth() {
        const auto mk = static_cast<std::size_t>(MoveKind::birth);
        ++tallies_.proposed[mk];
        const long n = killable_count();
        Loop<D> w = sample_intensity_loop(spec_, rng_);
        const bool admissible =
            kind_ == KernelKind::free_bc || placement(w, spec_.box) == Placement::inside;
        double dh = inf_energy;
        std::vector<double> row;
        double b_int = 0, b_cross = 0, w_self = 0;
        Aabb<D> box{};
        if (admissible) {
            box = bounding_box(w);
            w_self = self_W(w, pot_, spec_.grid);
            dh = w_self;
            if (std::isfinite(dh)) {
                const double inter = interaction_with_all(w, box, row, b_int, b_cross);
                dh = (inter == inf_energy) ? inf_energy : dh + inter;
            }
        }
        const double ratio = admissible
                                 ? (mass_ / static_cast<double>(n + 1)) * std::exp(-beta() * dh)
                                 : 0.0;
        const double u = rng_.u01();
        const bool accept = u <= std::min(1.0, ratio);
        log_move(MoveKind::birth, n, dh, ratio, u, accept);
        if (!accept) return;
        ++tallies_.accepted[mk];

        Slot s;
        s.loop = std::move(w);
        s.in_window = true;
        s.killable = true;
        s.w_self = w_self;
        s.b_int = b_int;
        s.b_cross = b_cross;
        s.aabb = box;
        // new row/column
        for (std::size_t k = 0; k < slots_.size(); ++k) T_[k].push_back(row[k]);
        row.push_back(0.0);
        T_.push_back(std::move(row));
        slots_.push_back(std::move(s));

        const std::size_t i = slots_.size() - 1;
        self_sum_ += w_self;
        pair_int_sum_ += b_int;
        pair_bnd_sum_ += b_cross;
        for (std::size_t k = 0; k + 1 < slots_.size(); ++k)
            (slots_[k].in_window ? pair_int_sum_ : pair_bnd_sum_) += T_[i][k];
        note_accept();
    }

    void death() {
        const auto mk = static_cast<std::size_t>(MoveKind::death);
        const long n = killable_count();
        if (n == 0) {
            ++tallies_.no_target;
            return;
        }
        ++tallies_.proposed[mk];
        const std::size_t i =
            fixed_count_ + static_cast<std::size_t>(rng_.uniform_index(static_cast<std::uint64_t>(n)));
        double removed = slots_[i].w_self + slots_[i].b_int + slots_[i].b_cross;
        for (std::size_t k = 0; k < slots_.size(); ++k)
            if (k != i) removed += T_[i][k];
        const double dh = -removed;
        const double ratio = (static_cast<double>(n) / mass_) * std::exp(-beta() * dh);
        const double u = rng_.u01();
        const bool accept = u <= std::min(1.0, ratio);
        log_move(MoveKind::death, n, dh, ratio, u, accept);
        if (!accept) return;
        ++tallies_.accepted[mk];

        self_sum_ -= slots_[i].w_self;
        pair_int_sum_ -= slots_[i].b_int;
        pair_bnd_sum_ -= slots_[i].b_cross;
        for (std::size_t k = 0; k < slots_.size(); ++k) {
            if (k == i) continue;
            (slots_[k].in_window ? pair_int_sum_ : pair_bnd_sum_) -= T_[i][k];
        }
        const std::size_t last = slots_.size() - 1;
        if (i != last) {
            slots_[i] = std::move(slots_[last]);
            for (std::size_t k = 0; k < slots_.size(); ++k) {
                T_[k][i] = T_[k][last];
                T_[i][k] = T_[last][k];
            }
            T_[i][i] = 0;
        }
        slots_.pop_back();
        T_.pop_back();
        for (auto& r : T_) r.pop_back();
        note_accept();
    }

    void rebridge() {
        const long nk = killable_count();
        const long total = nk + static_cast<long>(exc_units_.size());
        if (total == 0) {
            ++tallies_.no_target;
            return;
        }
        const long pick = static_cast<long>(rng_.uniform_index(static_cast<std::uint64_t>(total)));
        if (pick < nk) rebridge_loop(fixed_count_ + static_cast<std::size_t>(pick));
        else rebridge_excursion(exc_units_[static_cast<std::size_t>(pick - nk)]);
    }

    void rebridge_loop(std::size_t i) {
        const auto mk = static_cast<std::size_t>(MoveKind::rebridge);
        ++tallies_.proposed[mk];
        Loop<D> w = sample_loop(slots_[i].loop.start(), slots_[i].loop.j, spec_.grid, rng_);
        bool admissible = true;
        if (kind_ != KernelKind::free_bc) {
            if (touches_boundary(w, spec_.box)) admissible = false; // null event, treat as exterior
            else admissible = placement(w, spec_.box) == Placement::inside;
        }
        apply_path_update(MoveKind::rebridge, i, std::move(w), admissible);
    }

    void rebridge_excursion(std::pair<std::size_t, std::size_t> unit) {
        const auto mk = static_cast<std::size_t>(MoveKind::exc_rebridge);
        ++tallies_.proposed[mk];
        Slot& s = slots_[unit.first];
        const auto [a, b] = s.excursions[unit.second];
        Loop<D> w = s.loop; // candidate with redrawn intermediates
        if (!try_rebridge_interior(w, a, b, spec_.grid, spec_.box, cfg_.rejection_cap, rng_)) {
            ++tallies_.cap_failures;
            log_move(MoveKind::exc_rebridge, killable_count(), inf_energy, 0.0, 0.0, false);
            return;
        }
        apply_path_update(MoveKind::exc_rebridge, unit.first, std::move(w), true);
    }

    // Shared accept/apply logic for in-place path updates of slot i.
    void apply_path_update(MoveKind kind, std::size_t i, Loop<D> w, bool admissible) {
        const auto mk = static_cast<std::size_t>(kind);
        const long n = killable_count();
        double dh = inf_energy;
        std::vector<double> row;
        double b_int = 0, b_cross = 0, w_self = 0;
        Aabb<D> box{};
        if (admissible) {
            box = bounding_box(w);
            w_self = self_W(w, pot_, spec_.grid);
            double fresh = 0;
            bool infinite = (slots_[i].in_window && w_self == inf_energy);
            if (!infinite) {
                row.assign(slots_.size(), 0.0);
                for (std::size_t k = 0; k < slots_.size() && !infinite; ++k) {
                    if (k == i) continue;
                    const double t =
                        pair_T_screened(w, box, slots_[k].loop, slots_[k].aabb, pot_, spec_.grid);
                    if (t == inf_energy && (slots_[i].in_window || slots_[k].in_window)) {
                        infinite = true;
                        break;
                    }
                    row[k] = t;
                    if (slots_[i].in_window || slots_[k].in_window) fresh += t;
                }
                double nb_int = 0, nb_cross = 0;
                for (const auto& fb : frozen_) {
                    if (infinite) break;
                    const double t =
                        pair_T_screened(w, box, fb, bounding_box(fb), pot_, spec_.grid);
                    const bool relevant = slots_[i].in_window || started_in(fb, spec_.box);
                    if (t == inf_energy && relevant) {
                        infinite = true;
                        break;
                    }
                    (started_in(fb, spec_.box) ? nb_int : nb_cross) += t;
                }
                if (!infinite) {
                    b_int = nb_int;
                    b_cross = nb_cross;
                    double old_rel = slots_[i].b_int + (slots_[i].in_window ? slots_[i].b_cross : 0.0);
                    double new_rel = b_int + (slots_[i].in_window ? b_cross : 0.0);
                    for (std::size_t k = 0; k < slots_.size(); ++k) {
                        if (k == i) continue;
                        if (slots_[i].in_window || slots_[k].in_window) old_rel += T_[i][k];
                    }
                    new_rel += fresh;
                    if (slots_[i].in_window) {
                        old_rel += slots_[i].w_self;
                        new_rel += w_self;
                    }
                    dh = new_rel - old_rel;
                }
            }
        }
        const double ratio = admissible && std::isfinite(dh) ? std::exp(-beta() * dh)
                             : 0.0;
        const double u = rng_.u01();
        const bool accept = u <= std::min(1.0, ratio);
        log_move(kind, n, dh, ratio, u, accept);
        if (!accept) return;
        ++tallies_.accepted[mk];

        // retire old contributions
        if (slots_[i].in_window) {
            self_sum_ -= slots_[i].w_self;
            pair_int_sum_ -= slots_[i].b_int;
            pair_bnd_sum_ -= slots_[i].b_cross;
        } else {
            pair_bnd_sum_ -= slots_[i].b_int;
        }
        for (std::size_t k = 0; k < slots_.size(); ++k) {
            if (k == i) continue;
            if (slots_[i].in_window && slots_[k].in_window) pair_int_sum_ -= T_[i][k];
            else if (slots_[i].in_window || slots_[k].in_window) pair_bnd_sum_ -= T_[i][k];
        }
        // install new ones
        slots_[i].loop = std::move(w);
        slots_[i].w_self = w_self;
        slots_[i].b_int = b_int;
        slots_[i].b_cross = b_cross;
        slots_[i].aabb = box;
        for (std::size_t k = 0; k < slots_.size(); ++k) {
            if (k == i) continue;
            T_[i][k] = T_[k][i] = row[k];
        }
        if (slots_[i].in_window) {
            self_sum_ += w_self;
            pair_int_sum_ += b_int;
            pair_bnd_sum_ += b_cross;
        } else {
            pair_bnd_sum_ += b_int;
        }
        for (std::size_t k = 0; k < slots_.size(); ++k) {
            if (k == i) continue;
            if (slots_[i].in_window && slots_[k].in_window) pair_int_sum_ += T_[i][k];
            else if (slots_[i].in_window || slots_[k].in_window) pair_bnd_sum_ += T_[i][k];
        }
        note_accept();
    }

    KernelKind kind_;
    LoopMeasureSpec<D> spec_;
    Potential pot_;
    McmcConfig cfg_;
    Philox rng_;
    double mass_;

    std::vector<Slot> slots_;      // [crossing (fixed prefix)] + [killable suffix]
    std::size_t fixed_count_ = 0;
    std::vector<Loop<D>> frozen_;  // conditioning remainder, never touched
    std::vector<std::vector<double>> T_;
    std::vector<std::pair<std::size_t, std::size_t>> exc_units_; // (slot, excursion index)

    double self_sum_ = 0, pair_int_sum_ = 0, pair_bnd_sum_ = 0;
    Tallies tallies_{};
    std::vector<MoveRecord>* log_ = nullptr;
    std::uint64_t steps_done_ = 0;
    std::uint64_t accepted_total_ = 0;
};

} // namespace loopsoup
