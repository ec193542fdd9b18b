#pragma once

#include <string>

#include "loopsoup/errors.hpp"
#include "loopsoup/vec.hpp"

namespace loopsoup {

// Where a point sits relative to a closed box.
enum class Region { interior, boundary, exterior };

// Axis-aligned closed box with positive side lengths.
template <int D>
struct Box {
    Vec<D> lower{};
    Vec<D> upper{};

    double volume() const {
        double v = 1;
        for (int i = 0; i < D; ++i) v *= upper[i] - lower[i];
        return v;
    }

    double side(int i) const { return upper[i] - lower[i]; }

    bool contains(const Vec<D>& p) const { // closed box
        for (int i = 0; i < D; ++i)
            if (p[i] < lower[i] || p[i] > upper[i]) return false;
        return true;
    }

    bool strictly_inside(const Vec<D>& p) const {
        for (int i = 0; i < D; ++i)
            if (!(p[i] > lower[i] && p[i] < upper[i])) return false;
        return true;
    }

    Region classify(const Vec<D>& p) const {
        if (strictly_inside(p)) return Region::interior;
        return contains(p) ? Region::boundary : Region::exterior;
    }

    // True when this box sits inside `outer` (closed inclusion).
    bool subset_of(const Box& outer) const {
        for (int i = 0; i < D; ++i)
            if (lower[i] < outer.lower[i] || upper[i] > outer.upper[i]) return false;
        return true;
    }
};

template <int D>
inline Box<D> make_box(const Vec<D>& lower, const Vec<D>& upper) {
    for (int i = 0; i < D; ++i)
        if (!(upper[i] - lower[i] > 0))
            throw config_error("box: side " + std::to_string(i) + " is not positive");
    return Box<D>{lower, upper};
}

// Cube of side `s` centred at the origin, the standard observation window
// family used by the finite-volume approximants and temperedness checks.
template <int D>
inline Box<D> centered_cube(double s) {
    Vec<D> lo, hi;
    for (int i = 0; i < D; ++i) {
        lo[i] = -s / 2;
        hi[i] = s / 2;
    }
    return make_box(lo, hi);
}

template <int D>
inline Box<D> translate(Box<D> b, const Vec<D>& v) {
    b.lower += v;
    b.upper += v;
    return b;
}

} // namespace loopsoup
