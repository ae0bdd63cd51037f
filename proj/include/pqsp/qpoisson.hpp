#pragma once

#include <vector>

#include "pqsp/grid.hpp"

namespace pqsp {

// Instance of -Delta_q phi = |u|^s on the grid of u, phi(R) = 0.
struct PoissonProblem {
    RadialField u;  // source generator
    double q = 2.0;
    double s = 2.0;
    // Absolute regularization magnitude; negative means the default policy
    // eps = eps_factor * (gradient scale estimated from the source).
    double epsilon = -1.0;
    double eps_factor = 1e-6;
    double tol = 1e-8;  // relative dual-norm residual tolerance
    long max_iters = 400000;
};

struct EpsStage {
    double eps = 0.0;
    long iterations = 0;
    double rel_residual = 0.0;
    double movement = 0.0;  // relative Linf move against previous stage
};

struct PoissonCertificate {
    double min_phi = 0.0;
    double max_phi = 0.0;
    // <-Delta_q phi, phi> / ||phi||_{D^{1,q}}^q; equals 1 exactly at q = 2.
    double coercivity_ratio = 0.0;
    std::vector<EpsStage> eps_schedule;
};

struct PoissonSolution {
    RadialField phi;            // Dirichlet-truncated minimizer, phi >= 0
    double residual_norm = 0;   // final relative dual residual
    long iterations = 0;        // inner descent iterations, all stages
    double energy = 0;          // I(phi; u) at eps = 0
    double source_dual_norm = 0;
    // Adding this constant to phi gives the free-space q-potential of the
    // truncated source (constants pass through -Delta_q unchanged). Reported,
    // never applied to phi itself.
    double farfield_constant = 0;
    PoissonCertificate certificate;
};

// Regularized energy (1/q) int (|grad phi|^2 + eps^2)^{q/2} - int |u|^s phi.
// eps < 0 uses 0 (the exact energy).
double poisson_energy(const RadialField& phi, const PoissonProblem& prob,
                      double eps = -1.0);

// Minimizes the convex energy by preconditioned nonlinear conjugate gradient
// with Armijo backtracking and an eps -> 0 continuation ladder (warm starts).
// Nonnegativity of the result is checked, never enforced.
PoissonSolution solve_q_poisson(const PoissonProblem& prob,
                                const RadialField* initial_guess = nullptr);

// Radial Newton potential with the same Dirichlet truncation as the solver:
//   phi(r) = (1/r) int_0^r f rho^2 drho + int_r^R f rho drho - (1/R) int_0^R f rho^2 drho
// with f = |u|^s, evaluated by per-cell Gauss-Legendre quadrature on the
// analytic profile when available (cubic interpolant otherwise). Completely
// independent of the descent solver.
RadialField oracle_q2(const RadialField& u, double s);

// Far-field constant of the free-space q-potential of the truncated source.
double farfield_constant(const RadialField& u, double q, double s);

struct MonotonicityCertificate {
    double pairing = 0.0;   // <-Delta_q v1 - (-Delta_q v2), v1 - v2>
    double cq_ratio = 0.0;  // pairing / ||v1-v2||_{D^{1,q}}^q for q >= 2, else 0
};

// Asserts pairing > 0 (throws MonotonicityViolation otherwise).
MonotonicityCertificate monotonicity_certificate(const RadialField& v1,
                                                 const RadialField& v2,
                                                 double q);

}  // namespace pqsp
