#pragma once

#include <stdexcept>
#include <string>

namespace loopsoup {

// Error taxonomy, kept deliberately small.  Each class maps to one CLI exit
// code: config_error -> 2, statistical failures are verdict records (exit 3,
// never exceptions), everything else that escapes -> 4.

// Invalid run configuration: bad file syntax, unknown keys, parameter values
// outside their documented domain, uncertifiable weight tails.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed path/configuration data fed to a structural operation: fragments
// that do not tile a loop, mismatched glue endpoints, grid-size mismatches,
// points exactly on a splitting boundary.
struct structural_error : std::runtime_error {
    explicit structural_error(const std::string& what) : std::runtime_error(what) {}
};

// A Markov chain cannot start or continue soundly: infinite-energy initial
// state, cache drift beyond tolerance (an internal-consistency canary),
// exhausted rejection caps where a result is mandatory.
struct chain_error : std::runtime_error {
    explicit chain_error(const std::string& what) : std::runtime_error(what) {}
};

} // namespace loopsoup
