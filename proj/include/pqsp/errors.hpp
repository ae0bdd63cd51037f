#pragma once

#include <stdexcept>
#include <string>

namespace pqsp {

// Base class for everything this library throws.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid run configuration (grid sizes, tolerances, file contents).
struct ConfigError : Error {
    using Error::Error;
};

// An exponent left its admissible open interval. Carries the offending
// parameter name so callers can surface "which inequality failed" directly.
struct RangeError : Error {
    std::string parameter;
    RangeError(std::string param, const std::string& msg)
        : Error(msg), parameter(std::move(param)) {}
};

// Two fields living on different grids were combined.
struct GridMismatch : Error {
    using Error::Error;
};

// Iterative solve ran out of budget. Keeps the last residual for diagnostics.
struct NoConvergence : Error {
    long iterations = 0;
    double last_residual = 0.0;
    NoConvergence(const std::string& msg, long iters, double resid)
        : Error(msg), iterations(iters), last_residual(resid) {}
};

// Poisson minimizer came back with min(phi) below -1e-6*max(phi): the true
// minimizer is nonnegative, so this always signals a solver defect.
struct NegativityViolation : Error {
    using Error::Error;
};

// The discrete q-Laplacian paired negatively on a pair of distinct fields.
struct MonotonicityViolation : Error {
    using Error::Error;
};

// Operation requires r > r_threshold (scaling-functional regime) but the
// exponent set is in the small-lambda regime.
struct RegimeError : Error {
    using Error::Error;
};

// Operation needs an analytic profile tag but the field is sample-only.
struct ProfileRequired : Error {
    using Error::Error;
};

// No path endpoint with negative energy was found within the search budget.
struct PathNotAdmissible : Error {
    using Error::Error;
};

// Small-lambda run converged outside the ||u|| < M/2 window; the result is
// a critical point of the cut-off functional only, not of the full energy.
struct WindowViolation : Error {
    double norm_u = 0.0;
    double window = 0.0;  // M/2
    WindowViolation(const std::string& msg, double nu, double win)
        : Error(msg), norm_u(nu), window(win) {}
};

}  // namespace pqsp
