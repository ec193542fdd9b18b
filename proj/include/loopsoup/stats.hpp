#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include "loopsoup/errors.hpp"

namespace loopsoup {

// Streaming mean/variance (Welford).
class RunningStat {
  public:
    void add(double x) {
        ++n_;
        const double d = x - mean_;
        mean_ += d / static_cast<double>(n_);
        m2_ += d * (x - mean_);
    }
    long n() const { return n_; }
    double mean() const { return mean_; }
    double variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double sd() const { return std::sqrt(variance()); }
    double se() const { return n_ > 0 ? sd() / std::sqrt(static_cast<double>(n_)) : 0.0; }

  private:
    long n_ = 0;
    double mean_ = 0;
    double m2_ = 0;
};

// Standard error of the mean of an autocorrelated trace via batch means.
inline double batch_means_se(const std::vector<double>& trace, int batches = 32) {
    const std::size_t n = trace.size();
    if (n < static_cast<std::size_t>(2 * batches)) {
        RunningStat s;
        for (double x : trace) s.add(x);
        return s.se();
    }
    const std::size_t len = n / static_cast<std::size_t>(batches);
    RunningStat bm;
    for (int b = 0; b < batches; ++b) {
        double acc = 0;
        for (std::size_t k = 0; k < len; ++k) acc += trace[static_cast<std::size_t>(b) * len + k];
        bm.add(acc / static_cast<double>(len));
    }
    return bm.se();
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Ordinary or weighted least squares for y = intercept + slope * x.
struct LinearFit {
    double slope = 0, intercept = 0;
    double se_slope = 0, se_intercept = 0;
    int n = 0;
};

inline LinearFit linear_fit(const std::vector<double>& x, const std::vector<double>& y,
                            const std::vector<double>& w = {}) {
    if (x.size() != y.size() || x.size() < 3)
        throw std::domain_error("linear_fit: need matching x/y with at least 3 points");
    const std::size_t n = x.size();
    std::vector<double> wt = w;
    if (wt.empty()) wt.assign(n, 1.0);
    // Centered normal equations: immune to the cancellation that kills the
    // raw-moment form when one point carries a vastly larger weight.
    double sw = 0, xbar = 0, ybar = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sw += wt[i];
        xbar += wt[i] * x[i];
        ybar += wt[i] * y[i];
    }
    if (!(sw > 0)) throw std::domain_error("linear_fit: nonpositive total weight");
    xbar /= sw;
    ybar /= sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - xbar;
        sxx += wt[i] * dx * dx;
        sxy += wt[i] * dx * (y[i] - ybar);
    }
    if (!(sxx > 0)) throw std::domain_error("linear_fit: degenerate design");
    LinearFit f;
    f.n = static_cast<int>(n);
    f.slope = sxy / sxx;
    f.intercept = ybar - f.slope * xbar;
    // Residual-scaled parameter errors.
    double rss = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        rss += wt[i] * r * r;
    }
    const double dof = static_cast<double>(n) - 2.0;
    const double s2 = dof > 0 ? rss / dof : 0.0;
    f.se_slope = std::sqrt(s2 / sxx);
    f.se_intercept = std::sqrt(s2 * (1.0 / sw + xbar * xbar / sxx));
    return f;
}

namespace detail {

// Regularized incomplete gamma functions (series + continued fraction),
// accurate enough for p-values.
inline double gamma_p(double a, double x) {
    if (x < 0 || a <= 0) throw std::domain_error("gamma_p: bad arguments");
    if (x == 0) return 0;
    const double gln = std::lgamma(a);
    if (x < a + 1) { // series
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1;
            del *= x / ap;
            sum += del;
            if (std::abs(del) < std::abs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - gln);
    }
    // continued fraction for Q, then P = 1 - Q
    const double tiny = 1e-300;
    double b = x + 1 - a, c = 1 / tiny, d = 1 / b, h = d;
    for (int i = 1; i <= 500; ++i) {
        const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2;
        d = an * d + b;
        if (std::abs(d) < tiny) d = tiny;
        c = b + an / c;
        if (std::abs(c) < tiny) c = tiny;
        d = 1 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1) < 1e-15) break;
    }
    const double q = std::exp(-x + a * std::log(x) - gln) * h;
    return 1 - q;
}

} // namespace detail

// Survival function of chi-squared with k degrees of freedom.
inline double chi2_sf(double x, double k) {
    if (x <= 0) return 1.0;
    return 1.0 - detail::gamma_p(k / 2, x / 2);
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

// Asymptotic two-sample Kolmogorov-Smirnov p-value.
inline double ks2_pvalue(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw std::domain_error("ks2: empty sample");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    double d = 0, fa = 0, fb = 0;
    std::size_t ia = 0, ib = 0;
    while (ia < a.size() && ib < b.size()) {
        const double va = a[ia], vb = b[ib];
        if (va <= vb) fa = static_cast<double>(++ia) / na;
        if (vb <= va) fb = static_cast<double>(++ib) / nb;
        d = std::max(d, std::abs(fa - fb));
    }
    const double ne = std::sqrt(na * nb / (na + nb));
    const double lam = (ne + 0.12 + 0.11 / ne) * d;
    // The alternating series diverges pointwise as lam -> 0 (every partial
    // sum oscillates between 0 and 2); there the true p-value is 1.
    if (lam < 1e-3) return 1.0;
    double p = 0;
    bool converged = false;
    for (int k = 1; k <= 100; ++k) {
        const double term = 2 * std::pow(-1.0, k - 1) * std::exp(-2.0 * k * k * lam * lam);
        p += term;
        if (std::abs(term) < 1e-12) {
            converged = true;
            break;
        }
    }
    return converged ? std::clamp(p, 0.0, 1.0) : 1.0;
}

// Two-sample chi-squared on pooled adaptive bins (expected count >= 5 per
// bin under the pooled distribution).  Robust to atoms, ties, and integer
// data, which the window observables all have.
struct Chi2Result {
    double stat = 0;
    int dof = 0;
    double p = 1;
};

inline Chi2Result two_sample_chi2(const std::vector<double>& a, const std::vector<double>& b,
                                  int target_bins = 12) {
    if (a.size() < 10 || b.size() < 10) throw std::domain_error("two_sample_chi2: samples too small");
    std::vector<double> pooled = a;
    pooled.insert(pooled.end(), b.begin(), b.end());
    std::sort(pooled.begin(), pooled.end());
    // Candidate edges at pooled quantiles, deduplicated so atoms fall into
    // single bins.
    std::vector<double> edges;
    for (int q = 1; q < target_bins; ++q) {
        const double v = pooled[pooled.size() * static_cast<std::size_t>(q) / static_cast<std::size_t>(target_bins)];
        if (edges.empty() || v > edges.back()) edges.push_back(v);
    }
    auto bin_of = [&](double v) {
        return static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) -
                                        edges.begin());
    };
    const std::size_t nbins = edges.size() + 1;
    std::vector<double> ca(nbins, 0), cb(nbins, 0);
    for (double v : a) ca[bin_of(v)] += 1;
    for (double v : b) cb[bin_of(v)] += 1;
    // Merge sparse bins left to right.
    std::vector<double> ma, mb;
    double acca = 0, accb = 0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    for (std::size_t i = 0; i < nbins; ++i) {
        acca += ca[i];
        accb += cb[i];
        const double pool = acca + accb;
        if (pool * na / (na + nb) >= 5 && pool * nb / (na + nb) >= 5) {
            ma.push_back(acca);
            mb.push_back(accb);
            acca = accb = 0;
        }
    }
    if (acca + accb > 0) {
        if (ma.empty()) {
            ma.push_back(acca);
            mb.push_back(accb);
        } else {
            ma.back() += acca;
            mb.back() += accb;
        }
    }
    Chi2Result r;
    if (ma.size() < 2) return r; // all mass in one bin: identical within resolution
    for (std::size_t i = 0; i < ma.size(); ++i) {
        const double tot = ma[i] + mb[i];
        const double ea = tot * na / (na + nb), eb = tot * nb / (na + nb);
        r.stat += (ma[i] - ea) * (ma[i] - ea) / ea + (mb[i] - eb) * (mb[i] - eb) / eb;
    }
    r.dof = static_cast<int>(ma.size()) - 1;
    r.p = chi2_sf(r.stat, r.dof);
    return r;
}

// One-sample chi-squared of observed counts against given probabilities,
// pooling bins with expected < 5 into the last pooled cell.
inline Chi2Result chi2_goodness(const std::vector<double>& observed,
                                const std::vector<double>& probs) {
    if (observed.size() != probs.size())
        throw std::domain_error("chi2_goodness: size mismatch");
    double n = 0;
    for (double o : observed) n += o;
    std::vector<double> mo, me;
    double ao = 0, ae = 0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        ao += observed[i];
        ae += n * probs[i];
        if (ae >= 5) {
            mo.push_back(ao);
            me.push_back(ae);
            ao = ae = 0;
        }
    }
    if (ae > 0) {
        if (me.empty()) {
            mo.push_back(ao);
            me.push_back(ae);
        } else {
            mo.back() += ao;
            me.back() += ae;
        }
    }
    Chi2Result r;
    if (mo.size() < 2) return r;
    for (std::size_t i = 0; i < mo.size(); ++i)
        r.stat += (mo[i] - me[i]) * (mo[i] - me[i]) / me[i];
    r.dof = static_cast<int>(mo.size()) - 1;
    r.p = chi2_sf(r.stat, r.dof);
    return r;
}

// Probability mass function of N = sum of j * K_j, K_j independent Poisson
// with means lambda[j] (1-based semantics: lambda[0] is the j=1 mean), via
// the Panjer-style recursion
//   P(0) = exp(-sum lambda),  k P(k) = sum_{j<=k} j lambda_j P(k-j).
inline std::vector<double> compound_poisson_pmf(const std::vector<double>& lambda, int kmax) {
    double total = 0;
    for (double l : lambda) total += l;
    std::vector<double> p(static_cast<std::size_t>(kmax) + 1, 0.0);
    p[0] = std::exp(-total);
    for (int k = 1; k <= kmax; ++k) {
        double acc = 0;
        const int jtop = std::min<int>(k, static_cast<int>(lambda.size()));
        for (int j = 1; j <= jtop; ++j)
            acc += static_cast<double>(j) * lambda[static_cast<std::size_t>(j - 1)] *
                   p[static_cast<std::size_t>(k - j)];
        p[static_cast<std::size_t>(k)] = acc / static_cast<double>(k);
    }
    return p;
}

// Paired mean-difference test: returns the two-sided p-value for mean(a-b)=0.
inline double paired_t_pvalue(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 10)
        throw std::domain_error("paired_t: need matching samples of size >= 10");
    RunningStat s;
    for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] - b[i]);
    if (s.se() == 0) return 1.0;
    const double z = std::abs(s.mean()) / s.se();
    return 2 * normal_sf(z);
}

} // namespace loopsoup
