#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pqsp/energy.hpp"
#include "pqsp/errors.hpp"
#include "pqsp/grid.hpp"
#include "pqsp/params.hpp"

namespace pqsp {

enum class ReparamPolicy {
    None,
    EqualArc,   // equal W^{1,2} arc length between nodes
    EnergyArc,  // arc length in (field, energy/scale) graph space
};

struct MpaConfig {
    int path_nodes = 41;
    long max_outer_iters = 500;     // path deformation budget
    long max_polish_iters = 40000;  // saddle refinement budget
    // Convergence: dual norm of the gradient <= criticality_tol * ||u||^{p-1}.
    double criticality_tol = 1e-6;
    // When positive, convergence additionally requires the relative
    // strong-form residual of the first equation below this bound.
    double strong_residual_tol = 0.0;
    // Hand off from path deformation to the saddle polish once the max node
    // reaches this normalized criticality (or the max energy stalls).
    double handoff_criticality = 1e-2;
    ReparamPolicy reparam_policy = ReparamPolicy::EnergyArc;
    int reparam_every = 5;
    double trust_fraction = 0.25;  // max step as fraction of ||u||
    double neighbor_trust = 0.1;
    int stall_window = 15;
    double stall_rel = 1e-9;
    int tangent_refresh = 12;  // polish: rotation cadence
    int rotation_steps = 4;
    long t_doubling_budget = 60;  // admissibility search
    // Small-lambda regime: norm cap of the cut-off functional. Unset means
    // the auto policy 8 * (norm of the ray maximizer of the pure (p,r) part).
    std::optional<double> cutoff_M;
    std::string trace_path;  // per-iteration CSV when nonempty
};

struct MpaPath {
    std::vector<RadialField> nodes;  // nodes.front() == 0, J(nodes.back()) < 0
    std::vector<double> energies;
    double cutoff_M = 0.0;  // small-lambda regime only
};

struct CriticalPoint {
    RadialField u;
    double level = 0;           // J(u), estimate of the mountain-pass level
    double grad_dual_norm = 0;  // H^1 dual norm of J'(u) (or J_M' when cut off)
    double criticality = 0;     // grad_dual_norm / ||u||^{p-1}
    double pde_residual = 0;    // relative weighted-L2 strong-form residual, eq 1
    double poisson_residual = 0;  // same metric for eq 2
    double j_tilde = 0;         // scaling functional (AnyLambda regime; else 0)
    double norm_u = 0;          // W^{1,p} norm
    Regime regime = Regime::AnyLambda;
    bool cutoff_active = false;   // Z_M(u) < 1
    bool within_window = false;   // ||u|| < M/2 (small-lambda regime)
    double uncut_criticality = 0;  // small-lambda: J' dual recheck, normalized
    double cutoff_M = 0;
    long outer_iters = 0;
    long polish_iters = 0;
    long poisson_solves = 0;
};

// Thrown when the budget runs out; carries the best candidate seen so the
// caller can still write artifacts.
struct MpaNoConvergence : NoConvergence {
    CriticalPoint best;
    MpaNoConvergence(const std::string& msg, long iters, double resid)
        : NoConvergence(msg, iters, resid) {}
};

struct VerificationReport {
    bool trivial = false;
    double criticality = 0;     // normalized J' dual norm, fresh Poisson solve
    double grad_dual_norm = 0;
    double pde_residual = 0;    // eq 1, relative weighted L2
    double poisson_residual = 0;  // eq 2, relative weighted L2
    double j_tilde = 0;         // only valid in the AnyLambda regime
    bool j_tilde_valid = false;
    EnergyBreakdown energy;
    double norm_u = 0;
};

// Admissible initial path. AnyLambda: scaling curve t -> t^k u(t x) with the
// node budget concentrated around the closed-form energy maximizer, prepended
// with the straight segment from 0. SmallLambda: the ray t -> t u under the
// cut-off functional.
MpaPath initial_path(const EnergyModel& model, const RadialField& seed,
                     const MpaConfig& cfg);

// Mountain-pass search: deformation of the initial path (descent on the
// maximizer with Armijo acceptance, local relaxation, reparametrization),
// then dimer-style saddle polish of the detached maximizer. Throws
// NoConvergence (budget) or WindowViolation (small-lambda run converged with
// ||u|| >= M/2).
CriticalPoint run_mpa(const EnergyModel& model, const RadialField& seed,
                      const MpaConfig& cfg);

// Recomputes everything from scratch (fresh Poisson solve, no cache reuse)
// and reports the full certificate. Never throws on bad certificates.
VerificationReport verify_critical_point(const RadialField& u,
                                         const EnergyModel& model);

// Strong-form residual of -Delta_p u + |u|^{p-2}u + lambda phi |u|^{s-2}u
// - |u|^{r-2}u in the weighted-L2 metric, normalized by the largest term.
double strong_form_residual(const EnergyModel& model, const RadialField& u,
                            const EnergyGradient& grad);

}  // namespace pqsp
