// Minimal tour of the library: build a loop measure on a box, draw ideal-gas
// configurations, and compare the empirical particle number with the closed
// form for the non-interacting Bose gas.

#include <iostream>

#include "loopsoup/loopsoup.hpp"

using namespace loopsoup;

int main() {
    const TimeGrid g = make_time_grid(1.0, 16);
    const Box<3> box = centered_cube<3>(2.0); // [-1, 1]^3
    // At mu = 0 the weights decay only like j^{-5/2}, so the truncation needs
    // a large j_max before the tail bound clears a tight tolerance.
    const auto spec = make_measure_spec<3>(box, g, /*mu=*/0.0, /*j_max=*/4096, /*tail_tol=*/1e-6);

    std::cout << "loop measure mass on the box: " << measure_mass(spec) << "\n";
    std::cout << "expected particle number:     " << expected_particles(spec) << "\n";

    Philox rng(/*seed=*/7, /*replica=*/0, StreamPurpose::measure);
    RunningStat n_free, n_contained;
    for (int i = 0; i < 20000; ++i) {
        n_free.add(static_cast<double>(particle_count(sample_free(spec, rng), box)));
        n_contained.add(static_cast<double>(particle_count(sample_dirichlet(spec, rng), box)));
    }
    std::cout << "free field:      N = " << n_free.mean() << " +- " << n_free.se() << "\n";
    std::cout << "contained field: N = " << n_contained.mean() << " +- " << n_contained.se()
              << "  (containment discards boundary-crossing loops)\n";
    return 0;
}
