#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "loopsoup/chain.hpp"
#include "loopsoup/domain.hpp"
#include "loopsoup/energy.hpp"
#include "loopsoup/errors.hpp"
#include "loopsoup/loop.hpp"
#include "loopsoup/measure.hpp"
#include "loopsoup/rng.hpp"
#include "loopsoup/stats.hpp"

namespace loopsoup {

struct KernelRunReport {
    Tallies tallies{};
    long retained = 0;
    long total_steps = 0;
    double final_energy = 0; // audited cached total at the end of the run
};

// Drives one chain: burn-in, then emit every thinning-th state to the sink.
// The sink sees the chain itself so callers can pull configurations,
// breakdowns, or tallies as needed.
template <int D>
KernelRunReport run_kernel(KernelKind kind, const LoopMeasureSpec<D>& spec, const Potential& pot,
                           const Configuration<D>& conditioning, const McmcConfig& cfg, Philox rng,
                           const std::function<void(long, const Chain<D>&)>& sink) {
    Chain<D> chain(kind, spec, pot, conditioning, cfg, std::move(rng));
    chain.run(cfg.burnin);
    KernelRunReport rep;
    const long retained = cfg.steps / cfg.thinning;
    for (long r = 0; r < retained; ++r) {
        chain.run(cfg.thinning);
        if (sink) sink(r, chain);
        ++rep.retained;
    }
    rep.total_steps = cfg.burnin + retained * static_cast<long>(cfg.thinning);
    rep.final_energy = chain.audit_cache();
    rep.tallies = chain.tallies();
    return rep;
}

// Convenience wrapper collecting full configurations.
template <int D>
std::pair<std::vector<Configuration<D>>, KernelRunReport>
sample_kernel(KernelKind kind, const LoopMeasureSpec<D>& spec, const Potential& pot,
              const Configuration<D>& conditioning, const McmcConfig& cfg, Philox rng) {
    std::vector<Configuration<D>> out;
    out.reserve(static_cast<std::size_t>(cfg.steps / cfg.thinning));
    auto rep = run_kernel<D>(kind, spec, pot, conditioning, cfg, std::move(rng),
                             [&](long, const Chain<D>& c) { out.push_back(c.configuration()); });
    return {std::move(out), rep};
}

// Drops every conditioning loop not started in the outer box.  With a
// finite-range potential and outer grown past the interaction range this
// leaves the window dynamics exactly unchanged.
template <int D>
Configuration<D> truncate_conditioning(const Configuration<D>& conditioning,
                                       const Box<D>& outer) {
    Configuration<D> kept;
    for (const auto& w : conditioning.loops)
        if (started_in(w, outer)) kept.loops.push_back(w);
    return kept;
}

struct ZEstimate {
    double z = 0;      // mean of exp(-beta H) over reference draws
    double se = 0;
    long n = 0;
    double frac_finite = 0; // fraction of draws with finite energy
};

// Direct Monte Carlo normalizer: Z = E[exp(-beta H(alpha + frozen))] with
// alpha drawn from the reference process of the requested kind and frozen
// the conditioning remainder under that kind's window restriction.  The
// frozen-frozen energy is a constant factored into every draw, so this is
// the normalizer matching the chain's target density exactly.  If the
// frozen part alone carries infinite energy there is nothing to normalize.
template <int D>
ZEstimate estimate_z(KernelKind kind, const LoopMeasureSpec<D>& spec, const Potential& pot,
                     const Configuration<D>& conditioning, long n_samples, Philox& rng) {
    if (n_samples < 2) throw config_error("estimate_z: need at least 2 samples");
    Configuration<D> frozen;
    for (const auto& w : conditioning.loops) {
        const bool resampled = (kind == KernelKind::free_bc)
                                   ? started_in(w, spec.box)
                                   : placement(w, spec.box) == Placement::inside;
        if (!resampled) frozen.loops.push_back(w);
    }
    {
        const auto base = hamiltonian(frozen, spec.box, pot, spec.grid);
        if (!std::isfinite(base.total()))
            throw config_error("estimate_z: conditioning alone has infinite energy");
    }
    RunningStat acc;
    long finite = 0;
    for (long s = 0; s < n_samples; ++s) {
        Configuration<D> alpha = (kind == KernelKind::free_bc) ? sample_free(spec, rng)
                                                               : sample_dirichlet(spec, rng);
        for (const auto& w : frozen.loops) alpha.loops.push_back(w);
        const auto br = hamiltonian(alpha, spec.box, pot, spec.grid);
        const double h = br.total();
        if (std::isfinite(h)) ++finite;
        acc.add(std::isfinite(h) ? std::exp(-spec.grid.beta * h) : 0.0);
    }
    ZEstimate out;
    out.z = acc.mean();
    out.se = acc.se();
    out.n = n_samples;
    out.frac_finite = static_cast<double>(finite) / static_cast<double>(n_samples);
    return out;
}

// Tiled grand-canonical approximation: the plane is covered by cubes of
// integer side n placed on the lattice n Z^d, the whole grid is shifted by
// an integer vector drawn uniformly from the n^d lattice points of the
// centered cube, and each shifted tile that meets the requested window is
// filled by an independent interior-only chain with empty conditioning.
// Tile streams are substreams of one (seed, replica, tiles) Philox stream,
// keyed by the tile's enumeration index; the shift uses the last substream.
struct GnParams {
    int n = 4;               // tile side (integer, lattice pitch)
    std::uint64_t seed = 1;
    std::uint32_t replica = 0;
};

template <int D>
struct GnSample {
    Configuration<D> loops;       // union over contributing tiles
    Vec<D> shift{};               // the integer lattice shift applied
    long tiles = 0;               // tiles sampled
    std::vector<KernelRunReport> reports;
};

template <int D>
GnSample<D> sample_gn(const Box<D>& window, const GnParams& gp, const TimeGrid& grid, double mu,
                      const Potential& pot, int j_max, double tail_tol, const McmcConfig& cfg,
                      std::optional<double> cphi_hat = std::nullopt) {
    if (gp.n < 1) throw config_error("sample_gn: tile side must be a positive integer");
    const double n = static_cast<double>(gp.n);
    GnSample<D> out;

    Philox shift_rng(gp.seed, gp.replica, StreamPurpose::tiles, 0xFFFFFFFFu);
    const long lo_int = static_cast<long>(std::ceil(-n / 2));
    for (int i = 0; i < D; ++i)
        out.shift[i] = static_cast<double>(
            lo_int + static_cast<long>(shift_rng.uniform_index(static_cast<std::uint64_t>(gp.n))));

    // integer ranges of tile indices whose shifted tile meets the window
    std::array<long, D> xlo{}, xhi{};
    for (int i = 0; i < D; ++i) {
        xlo[i] = static_cast<long>(std::ceil((window.lower[i] - out.shift[i] - n / 2) / n));
        xhi[i] = static_cast<long>(std::floor((window.upper[i] - out.shift[i] + n / 2) / n));
        if (xhi[i] < xlo[i]) throw chain_error("sample_gn: empty tile cover");
    }

    const Box<D> tile0 = centered_cube<D>(n);
    const LoopMeasureSpec<D> tile_spec =
        make_measure_spec(tile0, grid, mu, j_max, tail_tol, cphi_hat);
    const Configuration<D> empty;

    std::array<long, D> x = xlo;
    std::uint32_t tile_index = 0;
    for (;;) {
        Vec<D> offset;
        for (int i = 0; i < D; ++i) offset[i] = n * static_cast<double>(x[i]) + out.shift[i];

        Philox tile_rng(gp.seed, gp.replica, StreamPurpose::tiles, tile_index);
        Chain<D> chain(KernelKind::dirichlet, tile_spec, pot, empty, cfg, std::move(tile_rng));
        chain.run(cfg.burnin + cfg.steps);
        KernelRunReport rep;
        rep.total_steps = cfg.burnin + cfg.steps;
        rep.retained = 1;
        rep.final_energy = chain.audit_cache();
        rep.tallies = chain.tallies();
        out.reports.push_back(rep);
        for (const auto& w : chain.interior_configuration().loops)
            out.loops.loops.push_back(translate(w, offset));
        ++out.tiles;
        ++tile_index;

        int axis = D - 1;
        while (axis >= 0 && ++x[static_cast<std::size_t>(axis)] >
                                xhi[static_cast<std::size_t>(axis)]) {
            x[static_cast<std::size_t>(axis)] = xlo[static_cast<std::size_t>(axis)];
            --axis;
        }
        if (axis < 0) break;
    }
    return out;
}

} // namespace loopsoup
