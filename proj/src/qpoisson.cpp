#include "pqsp/qpoisson.hpp"

#include <algorithm>
#include <cstdio>
#include <limits>
#include <cstdlib>
#include <cmath>
#include <numbers>

#include "pqsp/errors.hpp"
#include "pqsp/linops.hpp"

namespace pqsp {

namespace {

constexpr double kFourPi = 4.0 * std::numbers::pi;

std::vector<double> source_functional(const RadialField& u, double s) {
    const auto& w = u.grid()->node_weights();
    std::vector<double> ell(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        ell[i] = w[i] * std::pow(std::abs(u[i]), s);
    ell.back() = 0.0;  // Dirichlet row
    return ell;
}

// Gradient scale of the solution, from the radial flux balance
// sigma(phi') = -F(r)/(4 pi r^2): scale = (max flux)^{1/(q-1)}. Scales
// exactly with the homogeneity laws, which keeps the default eps commensurate
// under u -> t u and under the anisotropic rescaling.
double gradient_scale(const RadialGrid& grid, const std::vector<double>& ell,
                      double q) {
    double cum = 0.0, m = 0.0;
    for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
        cum += ell[i];
        const double r = grid.nodes()[i + 1];
        m = std::max(m, cum / (kFourPi * r * r));
    }
    return m > 0.0 ? std::pow(m, 1.0 / (q - 1.0)) : 0.0;
}

struct EnergyGrad {
    double energy;                     // regularized
    std::vector<double> grad;          // functional vector, Dirichlet row 0
    std::vector<double> edge_weights;  // (g^2+eps^2)^{(q-2)/2}
};

EnergyGrad energy_grad(const RadialGrid& grid, const std::vector<double>& phi,
                       const std::vector<double>& ell, double q, double eps) {
    const std::size_t n = phi.size();
    const auto& wm = grid.mid_weights();
    const auto& h = grid.spacings();
    EnergyGrad out;
    out.edge_weights.resize(n - 1);
    out.grad.assign(n, 0.0);
    double e = 0.0;
    for (std::size_t m = 0; m + 1 < n; ++m) {
        const double g = (phi[m + 1] - phi[m]) / h[m];
        const double w2 = g * g + eps * eps;
        e += wm[m] * std::pow(w2, 0.5 * q) / q;
        const double a = std::pow(w2, 0.5 * q - 1.0);
        out.edge_weights[m] = a;
        const double flux = wm[m] * a * g / h[m];
        out.grad[m] -= flux;
        out.grad[m + 1] += flux;
    }
    for (std::size_t i = 0; i < n; ++i) {
        e -= ell[i] * phi[i];
        out.grad[i] -= ell[i];
    }
    out.grad[n - 1] = 0.0;
    out.energy = e;
    return out;
}

struct InnerResult {
    long iterations = 0;
    double rel_residual = 0.0;
};

// Preconditioned nonlinear CG on the regularized convex energy. The
// preconditioner is the tridiagonal linear Laplacian weighted by the current
// edge coefficients (exact at q = 2, quasi-Newton otherwise). Armijo
// backtracking with factor 0.5 and slope 1e-4.
InnerResult minimize_stage(const RadialGrid& grid, std::vector<double>& phi,
                           const std::vector<double>& ell, double q,
                           double eps, double target_resid,
                           double dual_src, const RieszMap& riesz,
                           long max_iters) {
    const bool dbg = std::getenv("PQSP_DEBUG") != nullptr;
    auto eg = energy_grad(grid, phi, ell, q, eps);
    std::vector<double> dir, g_prev;
    double zg_prev = 0.0;
    InnerResult res;
    {
        const double r0 = riesz.dual_norm(eg.grad);
        res.rel_residual = dual_src > 0.0 ? r0 / dual_src : r0;
    }
    double best_resid = std::numeric_limits<double>::infinity();
    int no_progress = 0;
    for (long it = 0; it < max_iters; ++it) {
        const double resid = riesz.dual_norm(eg.grad);
        res.rel_residual = dual_src > 0.0 ? resid / dual_src : resid;
        if (dbg && (it % 200 == 0 || std::getenv("PQSP_DEBUG2")))
            std::fprintf(stderr, "[stage eps=%.3e] it=%ld rel=%.3e E=%.12e\n",
                         eps, it, res.rel_residual, eg.energy);
        if (resid <= target_resid) return res;
        // roundoff floor: the residual stops improving once the energy
        // decrease falls below machine precision
        if (resid < best_resid * (1.0 - 1e-3)) {
            best_resid = resid;
            no_progress = 0;
        } else if (++no_progress > 40) {
            return res;
        }
        ++res.iterations;

        for (double& a : eg.edge_weights) a = std::max(a, 1e-300);
        Tridiag pre = assemble_stiffness(grid, &eg.edge_weights, false);
        std::vector<double> head(eg.grad.begin(), eg.grad.end() - 1);
        auto z = pre.solve(head);
        z.push_back(0.0);

        double zg = 0.0;
        for (std::size_t i = 0; i < z.size(); ++i) zg += z[i] * eg.grad[i];

        if (dir.empty()) {
            dir = z;
            for (double& d : dir) d = -d;
        } else {
            double num = 0.0;
            for (std::size_t i = 0; i < z.size(); ++i)
                num += z[i] * (eg.grad[i] - g_prev[i]);
            const double beta =
                zg_prev > 0.0 ? std::max(0.0, num / zg_prev) : 0.0;
            for (std::size_t i = 0; i < dir.size(); ++i)
                dir[i] = -z[i] + beta * dir[i];
            double dg = 0.0;
            for (std::size_t i = 0; i < dir.size(); ++i) dg += dir[i] * eg.grad[i];
            // the preconditioner changes between iterations, so the conjugate
            // memory can go stale: demand a real descent angle or restart
            if (!std::isfinite(dg) || !(dg <= -0.1 * zg)) {
                dir = z;
                for (double& d : dir) d = -d;
            }
        }

        double dg = 0.0;
        for (std::size_t i = 0; i < dir.size(); ++i) dg += dir[i] * eg.grad[i];

        double alpha = 1.0;
        bool accepted = false;
        std::vector<double> trial(phi.size());
        EnergyGrad eg_trial;
        for (int ls = 0; ls < 60; ++ls) {
            for (std::size_t i = 0; i < phi.size(); ++i)
                trial[i] = phi[i] + alpha * dir[i];
            trial.back() = 0.0;
            eg_trial = energy_grad(grid, trial, ell, q, eps);
            if (eg_trial.energy <= eg.energy + 1e-4 * alpha * dg) {
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if (!accepted) {
            if (dbg)
                std::fprintf(stderr,
                             "[stage eps=%.3e] line search failed at it=%ld "
                             "rel=%.3e alpha=%.3e dg=%.3e\n",
                             eps, it, res.rel_residual, alpha, dg);
            return res;  // stagnated at this eps level
        }

        phi.swap(trial);
        g_prev = std::move(eg.grad);
        zg_prev = zg;
        eg = std::move(eg_trial);
    }
    return res;
}

}  // namespace

double poisson_energy(const RadialField& phi, const PoissonProblem& prob,
                      double eps) {
    phi.require_same_grid(prob.u);
    const double e = eps < 0.0 ? 0.0 : eps;
    auto ell = source_functional(prob.u, prob.s);
    // include the Dirichlet-row source in the energy pairing (phi(R) may be
    // nonzero for externally supplied fields)
    const auto& w = prob.u.grid()->node_weights();
    ell.back() = w.back() * std::pow(std::abs(prob.u[prob.u.size() - 1]), prob.s);
    std::vector<double> v(phi.values().begin(), phi.values().end());
    return energy_grad(*phi.grid(), v, ell, prob.q, e).energy;
}

double farfield_constant(const RadialField& u, double q, double s) {
    const auto& w = u.grid()->node_weights();
    double total = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        total += w[i] * std::pow(std::abs(u[i]), s);
    if (total <= 0.0) return 0.0;
    const double R = u.grid()->R();
    return (q - 1.0) / (3.0 - q) * std::pow(total / kFourPi, 1.0 / (q - 1.0)) *
           std::pow(R, -(3.0 - q) / (q - 1.0));
}

PoissonSolution solve_q_poisson(const PoissonProblem& prob,
                                const RadialField* initial_guess) {
    const auto& grid = *prob.u.grid();
    if (!(prob.tol > 0.0)) throw ConfigError("poisson: tol must be positive");
    if (prob.q < 2.0 && prob.epsilon == 0.0)
        throw ConfigError("poisson: q < 2 requires eps > 0 (singular weight)");
    if (initial_guess) initial_guess->require_same_grid(prob.u);

    auto ell = source_functional(prob.u, prob.s);
    const bool zero_source =
        std::none_of(ell.begin(), ell.end(), [](double v) { return v != 0.0; });

    PoissonSolution sol;
    sol.farfield_constant = farfield_constant(prob.u, prob.q, prob.s);
    if (zero_source) {
        sol.phi = RadialField::zeros(prob.u.grid());
        return sol;
    }

    RieszMap riesz(prob.u.grid(), false);
    const double dual_src = riesz.dual_norm(ell);
    sol.source_dual_norm = dual_src;
    const double gscale = gradient_scale(grid, ell, prob.q);

    std::vector<double> phi(prob.u.size(), 0.0);
    if (initial_guess) {
        const auto vals = initial_guess->values();
        phi.assign(vals.begin(), vals.end());
        phi.back() = 0.0;
    }

    const double target = 0.05 * prob.tol * dual_src;
    long budget = prob.max_iters;
    long total_iters = 0;

    auto run_stage = [&](double eps) {
        auto r = minimize_stage(grid, phi, ell, prob.q, eps, target, dual_src,
                                riesz, budget);
        total_iters += r.iterations;
        budget -= r.iterations;
        EpsStage st;
        st.eps = eps;
        st.iterations = r.iterations;
        st.rel_residual = r.rel_residual;
        sol.certificate.eps_schedule.push_back(st);
        return r;
    };

    if (prob.q == 2.0) {
        // weight exponent vanishes: the regularization is inert, solve once
        auto r = run_stage(0.0);
        if (r.rel_residual > prob.tol && initial_guess) {
            // warm starts accumulate roundoff that a cold solve avoids
            std::fill(phi.begin(), phi.end(), 0.0);
            r = run_stage(0.0);
        }
        if (r.rel_residual > prob.tol)
            throw NoConvergence("poisson: linear stage did not converge",
                                total_iters, r.rel_residual);
    } else {
        const double eps_target =
            prob.epsilon >= 0.0 ? prob.epsilon : prob.eps_factor * gscale;
        double eps = std::max(1e-2 * gscale, eps_target);
        if (initial_guess) {
            // try the target level directly from the supplied guess; fall
            // back to the full ladder when that stalls
            auto r = run_stage(std::max(eps_target, 0.0));
            if (r.rel_residual <= prob.tol) eps = std::max(eps_target, 0.0);
        }
        if (eps <= 0.0) eps = eps_target > 0.0 ? eps_target : 1e-12;
        // halve eps with warm starts until the solution stops moving at the
        // tolerance level (continues below eps_target when needed)
        auto run_ladder = [&](double eps0) {
            double e2 = eps0;
            std::vector<double> prev;
            double resid = 1.0;
            for (int stage = 0; stage < 80; ++stage) {
                auto r = run_stage(e2);
                resid = r.rel_residual;
                if (budget <= 0)
                    throw NoConvergence("poisson: iteration budget exhausted",
                                        total_iters, resid);
                double move = 0.0;
                if (!prev.empty()) {
                    double num = 0.0, den = 0.0;
                    for (std::size_t i = 0; i < phi.size(); ++i) {
                        num = std::max(num, std::abs(phi[i] - prev[i]));
                        den = std::max(den, std::abs(phi[i]));
                    }
                    move = den > 0.0 ? num / den : 0.0;
                    sol.certificate.eps_schedule.back().movement = move;
                }
                if (e2 <= eps_target && !prev.empty() &&
                    move < 0.25 * prob.tol)
                    break;
                prev = phi;
                e2 = e2 > eps_target ? std::max(0.5 * e2, eps_target)
                                     : 0.5 * e2;
            }
            return resid;
        };
        double last_resid = run_ladder(eps);
        if (last_resid > prob.tol && initial_guess) {
            // cold fallback: warm starts can accumulate roundoff
            std::fill(phi.begin(), phi.end(), 0.0);
            last_resid = run_ladder(std::max(1e-2 * gscale, eps_target));
        }
        if (last_resid > prob.tol)
            throw NoConvergence("poisson: continuation did not converge",
                                total_iters, last_resid);
    }

    sol.iterations = total_iters;
    sol.residual_norm = sol.certificate.eps_schedule.back().rel_residual;

    double mn = phi[0], mx = phi[0];
    for (double v : phi) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    sol.certificate.min_phi = mn;
    sol.certificate.max_phi = mx;
    if (mn < -1e-6 * std::max(mx, 0.0))
        throw NegativityViolation(
            "poisson: minimizer came back negative beyond tolerance (min " +
            std::to_string(mn) + ", max " + std::to_string(mx) + ")");

    sol.phi = RadialField(prob.u.grid(), phi);
    sol.energy = energy_grad(grid, phi, ell, prob.q, 0.0).energy;

    // At the exact minimizer <-Delta_q phi, phi> = <|u|^s, phi>; the gap
    // between the two pairings is a solver-quality certificate.
    const double self_pairing = std::pow(d1q_norm(sol.phi, prob.q), prob.q);
    double src_pairing = 0.0;
    for (std::size_t i = 0; i < phi.size(); ++i) src_pairing += ell[i] * phi[i];
    sol.certificate.coercivity_ratio =
        src_pairing > 0.0 ? self_pairing / src_pairing : 1.0;
    return sol;
}

namespace {

// 4-point Gauss-Legendre abscissae/weights on [0,1]
constexpr double kGx[4] = {0.069431844202973712, 0.330009478207571868,
                           0.669990521792428132, 0.930568155797026288};
constexpr double kGw[4] = {0.173927422568726929, 0.326072577431273071,
                           0.326072577431273071, 0.173927422568726929};

}  // namespace

RadialField oracle_q2(const RadialField& u, double s) {
    const auto& grid = *u.grid();
    const auto& nodes = grid.nodes();
    const std::size_t n = nodes.size();
    const double R = grid.R();

    auto f_at = [&](double r) {
        const double v = u.profile() ? u.profile()->value(r) : interpolate(u, r);
        return std::pow(std::abs(v), s);
    };

    // cumulative moments int_0^{r_i} f rho^2 and int_0^{r_i} f rho
    std::vector<double> m2(n, 0.0), m1(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double a = nodes[i], L = nodes[i + 1] - nodes[i];
        double s2 = 0.0, s1 = 0.0;
        for (int k = 0; k < 4; ++k) {
            const double rho = a + kGx[k] * L;
            const double fv = f_at(rho);
            s2 += kGw[k] * fv * rho * rho;
            s1 += kGw[k] * fv * rho;
        }
        m2[i + 1] = m2[i] + L * s2;
        m1[i + 1] = m1[i] + L * s1;
    }

    std::vector<double> phi(n);
    const double tail = m1[n - 1], full2 = m2[n - 1];
    for (std::size_t i = 0; i < n; ++i) {
        const double r = nodes[i];
        const double own = r > 0.0 ? m2[i] / r : 0.0;
        phi[i] = own + (tail - m1[i]) - full2 / R;
    }
    phi[n - 1] = 0.0;
    return RadialField(u.grid(), std::move(phi));
}

MonotonicityCertificate monotonicity_certificate(const RadialField& v1,
                                                 const RadialField& v2,
                                                 double q) {
    v1.require_same_grid(v2);
    const auto& grid = *v1.grid();
    const auto g1 = radial_gradient(v1);
    const auto g2 = radial_gradient(v2);
    auto sigma = [q](double g) {
        return g == 0.0 ? 0.0 : std::pow(std::abs(g), q - 2.0) * g;
    };
    double pairing = 0.0;
    bool distinct = false;
    for (std::size_t m = 0; m < g1.size(); ++m) {
        const double dg = g1[m] - g2[m];
        if (dg != 0.0) distinct = true;
        pairing += grid.mid_weights()[m] * (sigma(g1[m]) - sigma(g2[m])) * dg;
    }
    if (!distinct)
        throw MonotonicityViolation("monotonicity: fields have identical gradients");
    if (!(pairing > 0.0))
        throw MonotonicityViolation(
            "monotonicity: pairing " + std::to_string(pairing) +
            " is not strictly positive (discrete operator defect)");
    MonotonicityCertificate cert;
    cert.pairing = pairing;
    if (q >= 2.0) {
        const RadialField diff = v1 - v2;
        const double dn = d1q_norm(diff, q);
        cert.cq_ratio = dn > 0.0 ? pairing / std::pow(dn, q) : 0.0;
    }
    return cert;
}

}  // namespace pqsp
