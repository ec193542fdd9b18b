#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "loopsoup/errors.hpp"

namespace loopsoup {

// Nonnegative, nonincreasing pair potential phi(r), evaluated on distances.
// Values live in the extended reals: the hard core returns +infinity inside
// its radius, and exp(-beta * inf) underflows to exactly 0, so forbidden
// overlaps carry exactly zero weight with no epsilon tuning.
//
// Families:
//   zero                phi = 0 (free reference, used by the exactness suites)
//   hard_core(a)        +inf on [0, a), 0 beyond
//   top_hat(A, a)       A on [0, a), 0 beyond
//   gaussian(A, sigma)  A exp(-r^2 / (2 sigma^2))
//   compact_bump(A, a)  A exp(1 - 1/(1 - (r/a)^2)) on [0, a), 0 beyond
//
// An optional cutoff makes phi vanish beyond r_cut *inside the object*, so
// cached, recomputed, and oracle energies all see the same interaction.
class Potential {
  public:
    enum class Family { zero, hard_core, top_hat, gaussian, compact_bump };

    static Potential zero() { return Potential(Family::zero, 0, 0); }

    static Potential hard_core(double a) {
        require_positive(a, "hard_core radius");
        return Potential(Family::hard_core, 0, a);
    }

    static Potential top_hat(double amplitude, double a) {
        require_positive(amplitude, "top_hat amplitude");
        require_positive(a, "top_hat radius");
        return Potential(Family::top_hat, amplitude, a);
    }

    static Potential gaussian(double amplitude, double sigma) {
        require_positive(amplitude, "gaussian amplitude");
        require_positive(sigma, "gaussian sigma");
        return Potential(Family::gaussian, amplitude, sigma);
    }

    static Potential compact_bump(double amplitude, double a) {
        require_positive(amplitude, "compact_bump amplitude");
        require_positive(a, "compact_bump radius");
        return Potential(Family::compact_bump, amplitude, a);
    }

    Potential with_cutoff(double r_cut) const {
        if (!(r_cut > 0)) throw config_error("potential cutoff must be positive");
        Potential p = *this;
        p.r_cut_ = r_cut;
        return p;
    }

    double phi(double r) const {
        if (r >= r_cut_) return 0.0;
        switch (family_) {
            case Family::zero: return 0.0;
            case Family::hard_core:
                return r < scale_ ? std::numeric_limits<double>::infinity() : 0.0;
            case Family::top_hat: return r < scale_ ? amp_ : 0.0;
            case Family::gaussian: return amp_ * std::exp(-r * r / (2 * scale_ * scale_));
            case Family::compact_bump: {
                if (r >= scale_) return 0.0;
                const double u = r / scale_;
                return amp_ * std::exp(1.0 - 1.0 / (1.0 - u * u));
            }
        }
        return 0.0;
    }

    // Radius beyond which phi vanishes identically; +inf when there is none.
    double range() const {
        double native = std::numeric_limits<double>::infinity();
        switch (family_) {
            case Family::zero: native = 0.0; break;
            case Family::hard_core:
            case Family::top_hat:
            case Family::compact_bump: native = scale_; break;
            case Family::gaussian: break;
        }
        return std::min(native, r_cut_);
    }

    // Certified tail bound: sup over r >= R of phi(r).  All families are
    // nonincreasing, so this is phi(R).
    double tail(double R) const {
        if (!(R >= 0)) throw std::domain_error("tail: R must be nonnegative");
        return phi(R);
    }

    bool has_hard_core() const { return family_ == Family::hard_core; }
    Family family() const { return family_; }
    double amplitude() const { return amp_; }
    double scale() const { return scale_; }
    double cutoff() const { return r_cut_; }

  private:
    Potential(Family f, double amp, double scale) : family_(f), amp_(amp), scale_(scale) {}

    static void require_positive(double v, const char* what) {
        if (!(v > 0) || !std::isfinite(v))
            throw config_error(std::string(what) + " must be positive and finite");
    }

    Family family_;
    double amp_;
    double scale_;
    double r_cut_ = std::numeric_limits<double>::infinity();
};

// Thermodynamic parameters shared by every sampler and kernel.  The spatial
// dimension is a compile-time template parameter of the geometric types.
struct ModelParams {
    double beta = 1.0;
    double mu = 0.0;
};

inline ModelParams make_model_params(double beta, double mu) {
    if (!(beta > 0) || !std::isfinite(beta)) throw config_error("beta must be positive and finite");
    if (!std::isfinite(mu)) throw config_error("mu must be finite");
    return ModelParams{beta, mu};
}

} // namespace loopsoup
