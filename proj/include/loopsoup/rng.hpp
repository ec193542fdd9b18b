#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "loopsoup/errors.hpp"

namespace loopsoup {

// Purpose tag baked into a stream's identity so that, for one master seed,
// the measure sampler, the chain drivers, and the verification estimators
// never share a counter sequence.
enum class StreamPurpose : std::uint32_t {
    measure = 1,
    paths = 2,
    chain = 3,
    verify = 4,
    oracle = 5,
    tiles = 6,
};

// Philox4x32-10 counter-based generator.  A stream is identified by the
// 64-bit key (the master seed) plus the two high counter words, which hold
// (replica id, purpose tag); the two low counter words advance per block, so
// distinct (seed, replica, purpose) triples give provably disjoint blocks.
// Output is reproducible bit-for-bit on any platform; known-answer vectors
// are pinned in the test suite.
class Philox {
  public:
    Philox(std::uint64_t master_seed, std::uint32_t replica, StreamPurpose purpose)
        : Philox(master_seed, replica, static_cast<std::uint32_t>(purpose)) {}

    Philox(std::uint64_t master_seed, std::uint32_t replica, std::uint32_t purpose) {
        key_ = {static_cast<std::uint32_t>(master_seed & 0xFFFFFFFFu),
                static_cast<std::uint32_t>(master_seed >> 32)};
        ctr_ = {0u, 0u, replica, purpose};
    }

    // Substream variant: pre-positions the high word of the block counter,
    // carving the (seed, replica, purpose) stream into 2^32 disjoint
    // substreams of 2^32 blocks each.  Used for per-tile streams; a purpose
    // tag either uses substreams exclusively or not at all.
    Philox(std::uint64_t master_seed, std::uint32_t replica, StreamPurpose purpose,
           std::uint32_t substream)
        : Philox(master_seed, replica, purpose) {
        ctr_[1] = substream;
    }

    std::uint32_t next_u32() {
        if (avail_ == 0) refill();
        return block_[static_cast<std::size_t>(4 - avail_--)];
    }

    std::uint64_t next_u64() {
        const std::uint64_t lo = next_u32();
        const std::uint64_t hi = next_u32();
        return (hi << 32) | lo;
    }

    // Uniform on (0, 1]: safe under log().
    double u01() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

    // Uniform on [0, 1).
    double u01o() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * u01o(); }

    // Unbiased integer in {0, ..., n-1} by rejection.
    std::uint64_t uniform_index(std::uint64_t n) {
        if (n == 0) throw std::domain_error("uniform_index: empty range");
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        for (;;) {
            const std::uint64_t r = next_u64();
            if (r < limit) return r % n;
        }
    }

    // Standard normal via Box-Muller; the second variate is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(u01()));
        const double a = 2.0 * pi_ * u01o();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Exact Poisson sample.  Knuth's product method below lambda = 30, and
    // the exact splitting Poisson(l) = Poisson(l/2) + Poisson(l/2) above it,
    // so no normal approximation ever enters.
    long poisson(double lambda) {
        if (lambda < 0 || !std::isfinite(lambda))
            throw std::domain_error("poisson: lambda must be finite and nonnegative");
        if (lambda == 0) return 0;
        if (lambda > 30.0) return poisson(lambda / 2) + poisson(lambda / 2);
        const double floor_p = std::exp(-lambda);
        long k = 0;
        double p = u01();
        while (p > floor_p) {
            ++k;
            p *= u01();
        }
        return k;
    }

    // Draw an index with probability proportional to weights via a
    // precomputed cumulative table (binary search).
    std::size_t discrete(const std::vector<double>& cumulative) {
        if (cumulative.empty()) throw std::domain_error("discrete: empty table");
        const double u = u01o() * cumulative.back();
        std::size_t lo = 0, hi = cumulative.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cumulative[mid] <= u)
                lo = mid + 1;
            else
                hi = mid;
        }
        return lo;
    }

  private:
    static constexpr double pi_ = 3.14159265358979323846;

    static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
        const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
        hi = static_cast<std::uint32_t>(p >> 32);
        lo = static_cast<std::uint32_t>(p);
    }

    static std::array<std::uint32_t, 4> round_once(const std::array<std::uint32_t, 4>& c,
                                                   const std::array<std::uint32_t, 2>& k) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(0xD2511F53u, c[0], hi0, lo0);
        mulhilo(0xCD9E8D57u, c[2], hi1, lo1);
        return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }

    void refill() {
        std::array<std::uint32_t, 4> c = ctr_;
        std::array<std::uint32_t, 2> k = key_;
        for (int r = 0; r < 10; ++r) {
            if (r > 0) {
                k[0] += 0x9E3779B9u;
                k[1] += 0xBB67AE85u;
            }
            c = round_once(c, k);
        }
        block_ = c;
        avail_ = 4;
        if (++ctr_[0] == 0) ++ctr_[1]; // 64-bit counter in the low words
    }

    std::array<std::uint32_t, 4> ctr_{};
    std::array<std::uint32_t, 2> key_{};
    std::array<std::uint32_t, 4> block_{};
    int avail_ = 0;
    double spare_ = 0;
    bool has_spare_ = false;
};

// Raw single-block evaluation, exposed for the known-answer tests.
inline std::array<std::uint32_t, 4> philox4x32_10_block(std::array<std::uint32_t, 4> ctr,
                                                        std::array<std::uint32_t, 2> key) {
    auto mulhilo = [](std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
        const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
        hi = static_cast<std::uint32_t>(p >> 32);
        lo = static_cast<std::uint32_t>(p);
    };
    for (int r = 0; r < 10; ++r) {
        if (r > 0) {
            key[0] += 0x9E3779B9u;
            key[1] += 0xBB67AE85u;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(0xD2511F53u, ctr[0], hi0, lo0);
        mulhilo(0xCD9E8D57u, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

} // namespace loopsoup
