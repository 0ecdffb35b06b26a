#pragma once

#include <stdexcept>
#include <string>

namespace prbm {

// Error taxonomy used across the library. Every failure mode that callers are
// expected to handle gets its own type; plain std::logic_error is reserved for
// internal invariant breakage.

struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Evaluation outside the mathematical domain of a function (x <= 0 for
// boundary derivatives, x <= e for the logarithmic Lyapunov function, ...).
struct domain_error : std::runtime_error {
    explicit domain_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A point violates a geometric precondition (off the boundary, outside the
// x >= 0 halfspace, normal undefined on the axis, ...).
struct geometry_error : std::runtime_error {
    explicit geometry_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Requested analysis is inconsistent with the model's phase (e.g. return-time
// tails on a transient model).
struct regime_error : std::runtime_error {
    explicit regime_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A model parameter violates a standing assumption (e.g. boundary growth
// exponent >= 1).
struct assumption_error : std::runtime_error {
    explicit assumption_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Custom covariance failed positive definiteness.
struct spectral_error : std::runtime_error {
    explicit spectral_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A user-supplied function does not have the required shape (monotonicity,
// range, growth).
struct shape_error : std::runtime_error {
    explicit shape_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Too few usable samples for the requested estimate.
struct insufficient_data_error : std::runtime_error {
    explicit insufficient_data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Boundary profile fails the sublinearity required for the Lyapunov shift
// constant to exist.
struct non_sublinear_error : std::runtime_error {
    explicit non_sublinear_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace prbm
