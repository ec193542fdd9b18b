#pragma once

#include <array>
#include <cmath>

namespace loopsoup {

// Point (or displacement) in R^D.  Plain aggregate, componentwise arithmetic.
template <int D>
struct Vec {
    static_assert(D >= 1, "dimension must be positive");

    std::array<double, D> c{};

    double& operator[](int i) { return c[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return c[static_cast<std::size_t>(i)]; }

    Vec& operator+=(const Vec& o) {
        for (int i = 0; i < D; ++i) c[i] += o.c[i];
        return *this;
    }
    Vec& operator-=(const Vec& o) {
        for (int i = 0; i < D; ++i) c[i] -= o.c[i];
        return *this;
    }
    Vec& operator*=(double s) {
        for (int i = 0; i < D; ++i) c[i] *= s;
        return *this;
    }

    friend Vec operator+(Vec a, const Vec& b) { return a += b; }
    friend Vec operator-(Vec a, const Vec& b) { return a -= b; }
    friend Vec operator*(Vec a, double s) { return a *= s; }
    friend Vec operator*(double s, Vec a) { return a *= s; }

    friend bool operator==(const Vec& a, const Vec& b) { return a.c == b.c; }
    friend bool operator!=(const Vec& a, const Vec& b) { return !(a == b); }
};

template <int D>
inline double dot(const Vec<D>& a, const Vec<D>& b) {
    double s = 0;
    for (int i = 0; i < D; ++i) s += a.c[i] * b.c[i];
    return s;
}

template <int D>
inline double norm2(const Vec<D>& a) { return dot(a, a); }

template <int D>
inline double norm(const Vec<D>& a) { return std::sqrt(norm2(a)); }

template <int D>
inline double dist2(const Vec<D>& a, const Vec<D>& b) {
    double s = 0;
    for (int i = 0; i < D; ++i) {
        const double d = a.c[i] - b.c[i];
        s += d * d;
    }
    return s;
}

template <int D>
inline double dist(const Vec<D>& a, const Vec<D>& b) { return std::sqrt(dist2(a, b)); }

} // namespace loopsoup
