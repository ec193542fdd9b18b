#pragma once

#include <cmath>
#include <string>

#include "loopsoup/errors.hpp"

namespace loopsoup {

// Uniform imaginary-time grid: m points per unit interval of length beta.
// A loop of j periods carries j*m points at spacing dt = beta/m.  Durations
// are handled as integer step counts wherever exactness matters; dt is always
// derived from (beta, m), never stored, so step_count * dt reproduces the
// same rounding everywhere.
struct TimeGrid {
    double beta = 1.0;
    int steps_per_beta = 16; // m

    double dt() const { return beta / steps_per_beta; }
};

inline TimeGrid make_time_grid(double beta, int m) {
    if (!(beta > 0) || !std::isfinite(beta))
        throw config_error("time grid: beta must be positive and finite, got " + std::to_string(beta));
    if (m < 2)
        throw config_error("time grid: need at least 2 steps per beta, got " + std::to_string(m));
    return TimeGrid{beta, m};
}

// Converts a duration that must be a positive multiple of dt into a step
// count.  Used by operations whose public interface speaks in real time.
inline int duration_to_steps(const TimeGrid& g, double t) {
    if (!(t > 0) || !std::isfinite(t))
        throw std::domain_error("duration must be positive and finite");
    const double ratio = t / g.dt();
    const long long k = std::llround(ratio);
    if (k < 1 || std::abs(ratio - static_cast<double>(k)) > 1e-9 * std::max(1.0, ratio))
        throw std::domain_error("duration is not a positive multiple of dt");
    return static_cast<int>(k);
}

} // namespace loopsoup
