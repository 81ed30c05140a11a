// errors.hpp — Error taxonomy shared by the library and the CLI

#pragma once

#include <stdexcept>
#include <string>

namespace ifmps {

// Bad or contradictory user-facing parameters (config keys, CLI overrides,
// formula preconditions like "epsilon too large for this bound").
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A request that would exceed a memory or cost budget (basis too large,
// brute-force trajectory count too high).
struct ResourceError : std::runtime_error {
    explicit ResourceError(const std::string& what) : std::runtime_error(what) {}
};

// Quadrature that fails its tolerance, non-finite matrix entries, ODE blow-up.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

} // namespace ifmps
