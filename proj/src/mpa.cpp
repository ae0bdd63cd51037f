#include "pqsp/mpa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "pqsp/errors.hpp"
#include "pqsp/linops.hpp"

namespace pqsp {

namespace {

// J or J_M depending on regime, with one place owning the cutoff constant.
struct Evaluator {
    const EnergyModel& model;
    bool cut = false;
    CutoffConfig cc{};

    double energy(const RadialField& u) const {
        if (cut) return model.J_M(u, cc);
        return model.J(u).total;
    }
    EnergyGradient gradient(const RadialField& u) const {
        return cut ? model.J_M_grad(u, cc) : model.J_grad(u);
    }
};

std::size_t interior_argmax(const std::vector<double>& J) {
    // lowest index within 1e-12 of the maximum over interior nodes
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i + 1 < J.size(); ++i) mx = std::max(mx, J[i]);
    const double window = 1e-12 * std::max(1.0, std::abs(mx));
    for (std::size_t i = 1; i + 1 < J.size(); ++i)
        if (J[i] >= mx - window) return i;
    return 1;
}

class Trace {
public:
    explicit Trace(const std::string& path) {
        if (!path.empty()) {
            out_.open(path);
            out_ << "iter,phase,max_energy,criticality,norm_u\n";
        }
    }
    void row(long iter, const char* phase, double e, double crit, double nu) {
        if (out_.is_open())
            out_ << iter << ',' << phase << ',' << e << ',' << crit << ','
                 << nu << '\n';
    }

private:
    std::ofstream out_;
};

std::vector<RadialField> resample_path(const std::vector<RadialField>& path,
                                       const std::vector<double>& energies,
                                       ReparamPolicy policy) {
    const std::size_t m = path.size();
    double escale = 0.0;
    for (double e : energies) escale = std::max(escale, std::abs(e));
    if (escale == 0.0) escale = 1.0;

    std::vector<double> dn(m, 0.0);
    double field_len = 0.0;
    for (std::size_t j = 1; j < m; ++j) {
        dn[j] = h1_norm(path[j] - path[j - 1]);
        field_len += dn[j];
    }
    if (!(field_len > 0.0)) return path;

    std::vector<double> arc(m, 0.0);
    for (std::size_t j = 1; j < m; ++j) {
        double ds = dn[j] / field_len;
        if (policy == ReparamPolicy::EnergyArc) {
            const double de = (energies[j] - energies[j - 1]) / escale;
            ds = std::hypot(ds, de);
        }
        arc[j] = arc[j - 1] + ds;
    }
    if (!(arc.back() > 0.0)) return path;

    std::vector<RadialField> out;
    out.reserve(m);
    out.push_back(path.front());
    for (std::size_t k = 1; k + 1 < m; ++k) {
        const double target = arc.back() * double(k) / double(m - 1);
        std::size_t j = std::upper_bound(arc.begin(), arc.end(), target) -
                        arc.begin();
        j = std::clamp<std::size_t>(j, 1, m - 1);
        const double seg = arc[j] - arc[j - 1];
        const double th = seg > 0.0 ? (target - arc[j - 1]) / seg : 0.0;
        out.push_back(axpy(1.0 - th, path[j - 1], th * path[j]));
    }
    out.push_back(path.back());
    return out;
}

}  // namespace

double strong_form_residual(const EnergyModel& model, const RadialField& u,
                            const EnergyGradient& grad) {
    const auto& e = model.exponents();
    const auto& w = u.grid()->node_weights();
    auto sol = model.poisson(u);
    const double c = sol->farfield_constant;
    double res2 = 0.0, t2 = 0.0, t3 = 0.0;
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
        const double au = std::abs(u[i]);
        res2 += w[i] * grad.field[i] * grad.field[i];
        const double nl = e.lambda * (sol->phi[i] + c) *
                          (au == 0.0 ? 0.0 : std::pow(au, e.s - 1.0));
        const double loc = au == 0.0 ? 0.0 : std::pow(au, e.r - 1.0);
        t2 += w[i] * nl * nl;
        t3 += w[i] * loc * loc;
    }
    // scale of the |u|^{p-1} term as the first-equation reference
    double t1 = 0.0;
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
        const double au = std::abs(u[i]);
        const double mp = au == 0.0 ? 0.0 : std::pow(au, e.p - 1.0);
        t1 += w[i] * mp * mp;
    }
    const double denom = std::sqrt(std::max({t1, t2, t3, 1e-300}));
    return std::sqrt(res2) / denom;
}

MpaPath initial_path(const EnergyModel& model, const RadialField& seed,
                     const MpaConfig& cfg) {
    const auto& e = model.exponents();
    if (cfg.path_nodes < 11) throw ConfigError("mpa: path_nodes must be >= 11");
    const double seed_norm = w1p_norm(seed, e.p);
    if (!(seed_norm > 0.0)) throw ConfigError("mpa: seed profile is zero");

    MpaPath path;
    const Regime regime = theorem_regime(e);

    if (regime == Regime::AnyLambda) {
        if (!seed.profile())
            throw ProfileRequired("mpa: scaling path needs an analytic seed");
        const EnergyBreakdown base = model.J(seed);
        auto closed = [&](double t) {
            return std::pow(t, e.alpha1 - 3.0) * (base.kinetic + base.nonlocal) +
                   std::pow(t, e.alpha2 - 3.0) * base.mass -
                   std::pow(t, e.alpha3 - 3.0) * base.local_term;
        };
        double t_far = 1.0;
        long budget = cfg.t_doubling_budget;
        while (closed(t_far) >= 0.0 && budget-- > 0) t_far *= 2.0;
        if (closed(t_far) >= 0.0)
            throw PathNotAdmissible(
                "mpa: no negative-energy endpoint along the scaling curve");

        // locate the curve maximizer: coarse log scan, golden refinement
        const double t_lo_scan = t_far * std::pow(2.0, -30.0);
        double t_best = t_far, f_best = -std::numeric_limits<double>::infinity();
        for (int k = 0; k <= 96; ++k) {
            const double t =
                t_lo_scan * std::pow(t_far / t_lo_scan, double(k) / 96.0);
            const double f = closed(t);
            if (f > f_best) {
                f_best = f;
                t_best = t;
            }
        }
        double a = t_best / 2.0, b = std::min(t_best * 2.0, t_far);
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
        for (int it = 0; it < 80; ++it) {
            if (closed(x1) < closed(x2)) {
                a = x1;
                x1 = x2;
                x2 = a + gr * (b - a);
            } else {
                b = x2;
                x2 = x1;
                x1 = b - gr * (b - a);
            }
        }
        const double t_star = 0.5 * (a + b);

        // nodes: straight segment 0 -> u_{t_min}, then the scaling curve with
        // extra samples packed around the maximizer
        const double t_min = t_star / 16.0;
        const int m_straight = std::max(3, cfg.path_nodes / 5);
        const int m_curve = cfg.path_nodes - m_straight;
        std::vector<double> ts;
        const int m_focus = std::max(4, m_curve / 3);
        for (int k = 0; k < m_curve - m_focus; ++k)
            ts.push_back(t_min * std::pow(t_far / t_min,
                                          double(k) / double(m_curve - m_focus - 1)));
        for (int k = 0; k < m_focus; ++k)
            ts.push_back(0.5 * t_star *
                         std::pow(4.0, double(k) / double(m_focus - 1)));
        std::sort(ts.begin(), ts.end());
        ts.erase(std::unique(ts.begin(), ts.end()), ts.end());

        auto u_min = rescale_field(seed, t_min, e.scaling_k);
        for (int j = 0; j < m_straight; ++j)
            path.nodes.push_back((double(j) / m_straight) * u_min);
        for (double t : ts)
            path.nodes.push_back(rescale_field(seed, t, e.scaling_k));
    } else {
        // small-lambda regime: ray through the seed under the cut-off energy
        double M = cfg.cutoff_M.value_or(0.0);
        if (!(M > 0.0)) {
            // auto policy: 8 x norm of the pure-(p,r) ray maximizer, the
            // lambda -> 0 limit of the first path maximizer
            const double np = w1p_norm_pow(seed, e.p);
            const double lr = std::pow(lp_norm(seed, e.r), e.r);
            const double t_ray =
                std::pow(np / lr, 1.0 / (e.r - e.p));
            M = 8.0 * t_ray * seed_norm;
        }
        path.cutoff_M = M;
        Evaluator ev{model, true, CutoffConfig{M}};
        double t_far = 1.0;
        long budget = cfg.t_doubling_budget;
        while (ev.energy(t_far * seed) >= 0.0 && budget-- > 0) t_far *= 2.0;
        if (ev.energy(t_far * seed) >= 0.0)
            throw PathNotAdmissible(
                "mpa: cut-off ray stays nonnegative within the doubling budget");
        for (int j = 0; j < cfg.path_nodes; ++j)
            path.nodes.push_back(
                (t_far * double(j) / double(cfg.path_nodes - 1)) * seed);
    }

    Evaluator ev{model, regime == Regime::SmallLambda,
                 CutoffConfig{path.cutoff_M > 0 ? path.cutoff_M : 1.0}};
    path.energies.resize(path.nodes.size());
    for (std::size_t j = 0; j < path.nodes.size(); ++j)
        path.energies[j] = ev.energy(path.nodes[j]);
    if (!(path.energies.back() < 0.0))
        throw PathNotAdmissible("mpa: endpoint energy is not negative");
    return path;
}

namespace {

// Inexact Newton step for G(u) = 0 near the saddle: solves the
// Riesz-preconditioned system K^{-1} H delta = -K^{-1} G by GMRES in the
// H^1 inner product (H is symmetric there, one negative eigenvalue at a
// mountain pass, which GMRES handles). Hessian products are one-sided
// finite differences of the gradient.
template <typename GradFn>
std::optional<RadialField> newton_direction(
    const GradFn& gradient, const RieszMap& riesz, const RadialField& u,
    const EnergyGradient& grad, double nu, int max_krylov, double forcing,
    const RadialField* deflate = nullptr) {
    const auto& grid = u.grid();
    auto project = [&](RadialField v) {
        if (deflate) {
            const double c = h1_inner(v, *deflate);
            v = axpy(-c, *deflate, v);
        }
        return v;
    };
    auto precond = [&](const std::vector<double>& f) {
        return project(RadialField(grid, riesz.apply_inverse(f)));
    };
    auto hprod = [&](const RadialField& v) {
        const double vn = h1_norm(v);
        const double delta = 1e-4 * std::max(nu, 1.0) / std::max(vn, 1e-300);
        auto gp = gradient(axpy(delta, v, u));
        std::vector<double> hv(gp.functional.size());
        for (std::size_t k = 0; k < hv.size(); ++k)
            hv[k] = (gp.functional[k] - grad.functional[k]) / delta;
        return precond(hv);
    };
    // with a deflated direction the Krylov space stays transverse, so the
    // stiff cut-off cliff never enters the least-squares system

    std::vector<double> negg(grad.functional.size());
    for (std::size_t k = 0; k < negg.size(); ++k) negg[k] = -grad.functional[k];
    RadialField b = precond(negg);
    const double beta0 = h1_norm(b);
    if (!(beta0 > 0.0)) return std::nullopt;

    const int m = max_krylov;
    std::vector<RadialField> V;
    V.reserve(m + 1);
    V.push_back((1.0 / beta0) * b);
    // Hessenberg in column-major, Givens-reduced on the fly
    std::vector<std::vector<double>> H(m + 1, std::vector<double>(m, 0.0));
    std::vector<double> cs(m, 0.0), sn(m, 0.0), g(m + 1, 0.0);
    g[0] = beta0;
    int k_used = 0;
    for (int k = 0; k < m; ++k) {
        RadialField w = hprod(V[k]);
        for (int j = 0; j <= k; ++j) {
            H[j][k] = h1_inner(w, V[j]);
            w = axpy(-H[j][k], V[j], w);
        }
        H[k + 1][k] = h1_norm(w);
        const bool breakdown = H[k + 1][k] < 1e-14 * beta0;
        if (!breakdown) V.push_back((1.0 / H[k + 1][k]) * w);
        for (int j = 0; j < k; ++j) {
            const double t = cs[j] * H[j][k] + sn[j] * H[j + 1][k];
            H[j + 1][k] = -sn[j] * H[j][k] + cs[j] * H[j + 1][k];
            H[j][k] = t;
        }
        const double denom = std::hypot(H[k][k], H[k + 1][k]);
        if (denom == 0.0) break;
        cs[k] = H[k][k] / denom;
        sn[k] = H[k + 1][k] / denom;
        H[k][k] = denom;
        H[k + 1][k] = 0.0;
        g[k + 1] = -sn[k] * g[k];
        g[k] = cs[k] * g[k];
        k_used = k + 1;
        if (std::abs(g[k + 1]) <= forcing * beta0 || breakdown) break;
    }
    if (k_used == 0) return std::nullopt;
    // back substitution
    std::vector<double> y(k_used, 0.0);
    for (int i = k_used - 1; i >= 0; --i) {
        double s = g[i];
        for (int j = i + 1; j < k_used; ++j) s -= H[i][j] * y[j];
        if (H[i][i] == 0.0) return std::nullopt;
        y[i] = s / H[i][i];
    }
    RadialField delta = RadialField::zeros(grid);
    for (int i = 0; i < k_used; ++i) delta = axpy(y[i], V[i], delta);
    if (!std::isfinite(h1_norm(delta))) return std::nullopt;
    return delta;
}


// J_M along the ray t -> t u is closed form given the base integrals at u
// (homogeneity of the Poisson solution): one solve serves the whole ray.
// Returns the local maximizer of t -> J_M(t u) in a bracket around 1.
struct RayMax {
    double t_star = 1.0;
    double value = 0.0;  // J_M(t_star u), the ray-reduced energy
};

RayMax ray_energy_maximizer(const EnergyModel& model, const RadialField& u,
                            double cutoff_M) {
    const auto& e = model.exponents();
    const auto& w = u.grid()->node_weights();
    const double np = w1p_norm_pow(u, e.p);       // ||u||^p
    auto sol = model.poisson(u);
    const double c = sol->farfield_constant;
    double nhat = 0.0, loc = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double au = std::abs(u[i]);
        nhat += w[i] * (sol->phi[i] + c) * std::pow(au, e.s);
        loc += w[i] * std::pow(au, e.r);
    }
    const double norm2 = std::pow(np, 2.0 / e.p);
    const double sq = e.s * e.q / (e.q - 1.0);  // N(t u) = t^{sq} N(u)
    auto f = [&](double t) {
        const double z = bump_h(t * t * norm2 / (cutoff_M * cutoff_M));
        return std::pow(t, e.p) * np / e.p +
               e.lambda * (e.q - 1.0) / (e.q * e.s) * z * std::pow(t, sq) *
                   nhat -
               std::pow(t, e.r) * loc / e.r;
    };
    // nearest local maximizer around t = 1, searched in a local bracket
    // only: this step maintains radial stationarity, it must never teleport
    // the iterate to a different hump of the ray
    const double lo = 0.5, hi = 2.0;
    const int kn = 512;
    auto t_at = [&](int k) {
        return lo * std::pow(hi / lo, double(k) / double(kn));
    };
    std::vector<double> fv(kn + 1);
    for (int k = 0; k <= kn; ++k) fv[k] = f(t_at(k));
    int k1 = int(std::lround(std::log(1.0 / lo) / std::log(hi / lo) * kn));
    k1 = std::clamp(k1, 1, kn - 1);
    int kbest = -1;
    for (int off = 0; off <= kn; ++off) {
        for (int k : {k1 - off, k1 + off}) {
            if (k < 1 || k > kn - 1) continue;
            if (fv[k] >= fv[k - 1] && fv[k] >= fv[k + 1]) {
                kbest = k;
                break;
            }
        }
        if (kbest >= 0) break;
    }
    if (kbest < 0) return {1.0, f(1.0)};
    double a = t_at(kbest - 1), b = t_at(kbest + 1);
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
    for (int it = 0; it < 120; ++it) {
        if (f(x1) < f(x2)) {
            a = x1;
            x1 = x2;
            x2 = a + gr * (b - a);
        } else {
            b = x2;
            x2 = x1;
            x1 = b - gr * (b - a);
        }
    }
    const double t_star = 0.5 * (a + b);
    return {t_star, f(t_star)};
}

CriticalPoint build_certificate(const EnergyModel& model, const Evaluator& ev,
                                const RadialField& u, Regime regime,
                                double cutoff_M) {
    const auto& e = model.exponents();
    CriticalPoint cp;
    cp.u = u;
    cp.regime = regime;
    cp.cutoff_M = cutoff_M;
    cp.norm_u = w1p_norm(u, e.p);
    auto grad = ev.gradient(u);
    cp.grad_dual_norm = grad.dual_norm;
    cp.criticality =
        grad.dual_norm / std::max(std::pow(cp.norm_u, e.p - 1.0), 1e-300);
    cp.level = ev.energy(u);
    cp.pde_residual = strong_form_residual(model, u, grad);
    auto sol = model.poisson(u);
    {
        // strong-form residual of -Delta_q phi = |u|^s in the same metric
        const auto& grid = *u.grid();
        const auto& w = grid.node_weights();
        const auto g = radial_gradient(sol->phi);
        std::vector<double> a(g.size());
        for (std::size_t m = 0; m < a.size(); ++m)
            a[m] = g[m] == 0.0 ? 0.0
                               : std::pow(std::abs(g[m]), e.q - 2.0);
        std::vector<double> flux(u.size());
        apply_flux_functional(grid, sol->phi.values(), a, flux);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i + 1 < u.size(); ++i) {
            const double src = std::pow(std::abs(u[i]), e.s);
            const double r = flux[i] / w[i] - src;
            num += w[i] * r * r;
            den += w[i] * src * src;
        }
        cp.poisson_residual = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    }
    if (regime == Regime::AnyLambda) {
        cp.j_tilde = model.J_tilde(u);
    } else {
        const double norm2 = std::pow(cp.norm_u, 2.0);
        cp.cutoff_active = bump_h(norm2 / (cutoff_M * cutoff_M)) < 1.0;
        cp.within_window = cp.norm_u < 0.5 * cutoff_M;
        if (cp.within_window) {
            auto uncut = model.J_grad(u);
            cp.uncut_criticality =
                uncut.dual_norm /
                std::max(std::pow(cp.norm_u, e.p - 1.0), 1e-300);
        }
    }
    return cp;
}

}  // namespace

CriticalPoint run_mpa(const EnergyModel& model, const RadialField& seed,
                      const MpaConfig& cfg) {
    const auto& e = model.exponents();
    const Regime regime = theorem_regime(e);
    MpaPath path = initial_path(model, seed, cfg);
    Evaluator ev{model, regime == Regime::SmallLambda,
                 CutoffConfig{path.cutoff_M > 0 ? path.cutoff_M : 1.0}};
    Trace trace(cfg.trace_path);
    RieszMap riesz(model.grid(), true);

    auto& nodes = path.nodes;
    auto& J = path.energies;
    const double p = e.p;

    auto sobolev = [&](const EnergyGradient& g) {
        auto z = riesz.apply_inverse(g.functional);
        return RadialField(model.grid(), std::move(z));
    };
    // Probe evaluations (line-search trials, FD Hessian products) may hit the
    // Poisson solver's precision floor on extreme fields; a failed probe is
    // rejected, never fatal. Certificate evaluations still propagate.
    auto try_energy = [&](const RadialField& v, double* out) {
        try {
            *out = ev.energy(v);
            return true;
        } catch (const NoConvergence&) {
            return false;
        }
    };
    auto try_gradient = [&](const RadialField& v, EnergyGradient* out) {
        try {
            *out = ev.gradient(v);
            return true;
        } catch (const NoConvergence&) {
            return false;
        }
    };

    // ---- phase 1: path deformation ----
    long outer = 0;
    std::vector<double> history;
    double best_path_crit = std::numeric_limits<double>::infinity();
    long best_path_iter = 0;
    for (; outer < cfg.max_outer_iters; ++outer) {
        const std::size_t i = interior_argmax(J);
        RadialField& u = nodes[i];
        auto grad = ev.gradient(u);
        const double nu = w1p_norm(u, p);
        const double crit =
            grad.dual_norm / std::max(std::pow(nu, p - 1.0), 1e-300);
        trace.row(outer, "path", J[i], crit, nu);
        history.push_back(J[i]);
        if (crit <= cfg.handoff_criticality && outer > 5) break;
        if (crit < 0.8 * best_path_crit) {
            best_path_crit = crit;
            best_path_iter = outer;
        } else if (outer - best_path_iter > 4 * cfg.stall_window) {
            break;  // criticality has flatlined; let the polish take over
        }
        if (history.size() > std::size_t(cfg.stall_window)) {
            const double past = history[history.size() - 1 - cfg.stall_window];
            if (std::abs(history.back() - past) <
                cfg.stall_rel * std::max(1.0, std::abs(history.back())))
                break;
        }

        // Armijo descent on the maximizer (trust-capped Sobolev direction)
        auto dir = sobolev(grad);
        const double dn = h1_norm(dir);
        double alpha =
            std::min(1.0, cfg.trust_fraction * std::max(nu, 1e-12) /
                              std::max(dn, 1e-300));
        double gd = 0.0;
        for (std::size_t k = 0; k < dir.size(); ++k)
            gd += grad.functional[k] * dir[k];
        const double J0 = J[i];
        for (int ls = 0; ls < 40; ++ls) {
            auto trial = axpy(-alpha, dir, u);
            double Jt;
            if (try_energy(trial, &Jt) && Jt <= J0 - 1e-4 * alpha * gd) {
                nodes[i] = std::move(trial);
                J[i] = Jt;
                break;
            }
            alpha *= 0.5;
        }

        // relax the neighbors downhill with a smaller budget
        for (std::size_t jn : {i - 1, i + 1}) {
            if (jn == 0 || jn + 1 >= nodes.size()) continue;
            EnergyGradient gn;
            if (!try_gradient(nodes[jn], &gn)) continue;
            auto dirn = sobolev(gn);
            const double nn = std::max(w1p_norm(nodes[jn], p), 0.1);
            const double an = std::min(
                1.0, cfg.neighbor_trust * nn / std::max(h1_norm(dirn), 1e-300));
            auto trial = axpy(-an, dirn, nodes[jn]);
            double Jt;
            if (try_energy(trial, &Jt) && Jt < J[jn]) {
                nodes[jn] = std::move(trial);
                J[jn] = Jt;
            }
        }

        if (cfg.reparam_policy != ReparamPolicy::None &&
            (outer + 1) % cfg.reparam_every == 0) {
            auto resampled = resample_path(nodes, J, cfg.reparam_policy);
            std::vector<double> Jr(J.size());
            Jr.front() = J.front();
            Jr.back() = J.back();
            bool ok = true;
            for (std::size_t k = 1; k + 1 < resampled.size() && ok; ++k)
                ok = try_energy(resampled[k], &Jr[k]);
            if (ok) {
                nodes = std::move(resampled);
                J = std::move(Jr);
            }
        }
    }

    // ---- phase 2: saddle polish on the detached maximizer ----
    const std::size_t i0 = interior_argmax(J);
    RadialField u = nodes[i0];
    RadialField tangent = nodes[std::min(i0 + 1, nodes.size() - 1)] -
                          nodes[i0 - 1];
    {
        const double tn = h1_norm(tangent);
        if (tn > 0.0) tangent = (1.0 / tn) * tangent;
    }

    auto grad = ev.gradient(u);
    double nu = w1p_norm(u, p);
    double crit = grad.dual_norm / std::max(std::pow(nu, p - 1.0), 1e-300);
    double best_crit = crit;
    RadialField best_u = u;
    const double norm_floor = 1e-6 * std::max(nu, 1e-6);

    long polish = 0;
    auto converged = [&](const RadialField& cand, double c) {
        if (c > cfg.criticality_tol) return false;
        if (w1p_norm(cand, p) <= norm_floor) return false;
        if (cfg.strong_residual_tol > 0.0) {
            auto g2 = ev.gradient(cand);
            if (strong_form_residual(model, cand, g2) > cfg.strong_residual_tol)
                return false;
        }
        return true;
    };
    auto gradient_fn = [&](const RadialField& v) { return ev.gradient(v); };
    const bool dbg_polish = std::getenv("PQSP_DEBUG_MPA") != nullptr;

    auto record_best = [&]() {
        if (crit < best_crit && nu > norm_floor) {
            best_crit = crit;
            best_u = u;
            return true;
        }
        return false;
    };

    // Deflated inexact-Newton attempt; in the cut-off regime the trial is
    // ray-restored before judging so the radial residual the step reintroduces
    // cannot mask transverse progress.
    auto newton_attempt = [&]() {
        std::optional<RadialField> radial_dir;
        if (ev.cut) radial_dir = (1.0 / std::max(h1_norm(u), 1e-300)) * u;
        std::optional<RadialField> delta;
        try {
            delta = newton_direction(gradient_fn, riesz, u, grad, nu, 45,
                                     crit < 1e-3 ? 0.02 : 0.1,
                                     radial_dir ? &*radial_dir : nullptr);
        } catch (const NoConvergence&) {
        }
        if (!delta) return false;
        const double dn = h1_norm(*delta);
        const double cap = 0.5 * std::max(nu, 1e-12);
        const double scale = dn > cap ? cap / dn : 1.0;
        auto trial = axpy(scale, *delta, u);
        if (ev.cut) {
            try {
                trial = ray_energy_maximizer(model, trial, ev.cc.M).t_star *
                        trial;
            } catch (const NoConvergence&) {
                return false;
            }
        }
        EnergyGradient gtrial;
        if (!try_gradient(trial, &gtrial)) return false;
        const double nut = w1p_norm(trial, p);
        const double ct =
            gtrial.dual_norm / std::max(std::pow(nut, p - 1.0), 1e-300);
        if (!(ct < crit) || !(nut > norm_floor)) return false;
        u = std::move(trial);
        grad = std::move(gtrial);
        nu = nut;
        crit = ct;
        record_best();
        return true;
    };

    if (ev.cut) {
        // Cut-off regime: the bump factor sees only ||u||, and along rays the
        // energy is closed form from one Poisson solve. Alternate exact ray
        // stationarity with transverse descent of the ray-reduced energy.
        double jred = 0.0;
        bool have_jred = false;
        try {
            auto rm = ray_energy_maximizer(model, u, ev.cc.M);
            u = rm.t_star * u;
            jred = rm.value;
            have_jred = true;
            grad = ev.gradient(u);
            nu = w1p_norm(u, p);
            crit = grad.dual_norm / std::max(std::pow(nu, p - 1.0), 1e-300);
            record_best();
        } catch (const NoConvergence&) {
        }
        long next_newton = 0;
        long stagnant = 0;
        for (; polish < cfg.max_polish_iters; ++polish) {
            if (converged(u, crit)) break;
            if (crit < 0.5 && polish >= next_newton) {
                if (newton_attempt()) {
                    stagnant = 0;
                    continue;
                }
                next_newton = polish + 8;
            }
            // transverse direction: Sobolev gradient with the radial
            // component projected out
            auto z = sobolev(grad);
            RadialField uhat = (1.0 / std::max(h1_norm(u), 1e-300)) * u;
            RadialField d = axpy(-h1_inner(z, uhat), uhat, z);
            double gd = 0.0;
            for (std::size_t k = 0; k < d.size(); ++k)
                gd += grad.functional[k] * d[k];
            if (!(gd > 0.0)) {
                d = z;
                gd = 0.0;
                for (std::size_t k = 0; k < d.size(); ++k)
                    gd += grad.functional[k] * d[k];
            }
            double alpha = std::min(
                1.0, cfg.trust_fraction * std::max(nu, 1e-12) /
                         std::max(h1_norm(d), 1e-300));
            bool moved = false;
            for (int ls = 0; ls < 30 && !moved; ++ls) {
                auto trial = axpy(-alpha, d, u);
                try {
                    auto rm = ray_energy_maximizer(model, trial, ev.cc.M);
                    if (!have_jred || rm.value <= jred - 1e-4 * alpha * gd) {
                        trial = rm.t_star * trial;
                        EnergyGradient gtrial;
                        if (try_gradient(trial, &gtrial)) {
                            u = std::move(trial);
                            grad = std::move(gtrial);
                            nu = w1p_norm(u, p);
                            crit = grad.dual_norm /
                                   std::max(std::pow(nu, p - 1.0), 1e-300);
                            jred = rm.value;
                            have_jred = true;
                            moved = true;
                            record_best();
                        }
                    }
                } catch (const NoConvergence&) {
                }
                alpha *= 0.5;
            }
            if (crit >= 0.995 * best_crit) {
                if (++stagnant > 300) {
                    MpaNoConvergence err(
                        "mpa: cut-off polish stagnated", outer + polish,
                        best_crit);
                    err.best = build_certificate(model, ev, best_u, regime,
                                                 path.cutoff_M);
                    err.best.outer_iters = outer;
                    err.best.polish_iters = polish;
                    throw err;
                }
            } else {
                stagnant = 0;
            }
            if (dbg_polish && polish % 10 == 0)
                std::fprintf(stderr,
                             "[cut polish %ld] crit=%.3e jred=%.6e nu=%.3f\n",
                             polish, crit, jred, nu);
            if (polish % 25 == 0)
                trace.row(polish, "polish", jred, crit, nu);
        }
    } else {
        double alpha = 0.3;
        long stagnant = 0;
        long next_newton = 0;
        for (; polish < cfg.max_polish_iters; ++polish) {
            if (converged(u, crit)) break;
            if (crit < 0.5 && polish >= next_newton) {
                if (newton_attempt()) continue;
                next_newton = polish + 10;
            }

            if (polish % cfg.tangent_refresh == 0) {
                // rotate the tangent toward the most unstable mode of
                // K^{-1} H using finite-difference Hessian products
                RadialField z = tangent;
                for (int rs = 0; rs < cfg.rotation_steps; ++rs) {
                    const double du = 1e-5 * std::max(nu, 1.0);
                    EnergyGradient gplus;
                    if (!try_gradient(axpy(du, z, u), &gplus)) break;
                    std::vector<double> hz(gplus.functional.size());
                    for (std::size_t k = 0; k < hz.size(); ++k)
                        hz[k] =
                            (gplus.functional[k] - grad.functional[k]) / du;
                    RadialField khz(model.grid(), riesz.apply_inverse(hz));
                    const double rho = h1_inner(z, khz);
                    RadialField znew = axpy(
                        -0.5 / std::max(std::abs(rho), 1e-10), khz - rho * z,
                        z);
                    const double zn = h1_norm(znew);
                    if (zn < 1e-14) break;
                    z = (1.0 / zn) * znew;
                }
                tangent = z;
            }

            auto zdir = sobolev(grad);
            const double zpar = h1_inner(zdir, tangent);
            RadialField step = axpy(-2.0 * zpar, tangent, zdir);
            const double sn = h1_norm(step);
            const double cap = cfg.trust_fraction * std::max(nu, 1e-12) /
                               std::max(sn, 1e-300);
            const double a = std::min(alpha, cap);
            auto trial = axpy(-a, step, u);
            EnergyGradient gtrial;
            if (!try_gradient(trial, &gtrial)) {
                alpha *= 0.4;
                continue;
            }
            const double nut = w1p_norm(trial, p);
            const double ct =
                gtrial.dual_norm / std::max(std::pow(nut, p - 1.0), 1e-300);
            // small slack keeps near-stationary wandering alive; the
            // stagnation clock below prevents ridge-walking
            if (ct <= crit * 1.0001) {
                u = std::move(trial);
                grad = std::move(gtrial);
                nu = nut;
                crit = ct;
                alpha = std::min(alpha * 1.3, 1.0);
                if (record_best()) stagnant = 0;
            } else {
                alpha *= 0.4;
                if (alpha < 1e-10) alpha = 0.3;
            }
            if (++stagnant > 250) {
                u = best_u;
                grad = ev.gradient(u);
                nu = w1p_norm(u, p);
                crit =
                    grad.dual_norm / std::max(std::pow(nu, p - 1.0), 1e-300);
                tangent = (1.0 / std::max(h1_norm(u), 1e-300)) * u;
                alpha = 0.3;
                stagnant = 0;
            }
            if (dbg_polish && polish % 20 == 0)
                std::fprintf(stderr,
                             "[polish %ld] crit=%.3e alpha=%.2e nu=%.3f\n",
                             polish, crit, alpha, nu);
            if (polish % 25 == 0)
                trace.row(polish, "polish", ev.energy(u), crit, nu);
        }
    }

    if (!converged(u, crit)) {
        u = best_u;  // fall back to the best candidate seen
        grad = ev.gradient(u);
        nu = w1p_norm(u, p);
        crit = grad.dual_norm / std::max(std::pow(nu, p - 1.0), 1e-300);
    }

    CriticalPoint cp = build_certificate(model, ev, u, regime, path.cutoff_M);
    cp.outer_iters = outer;
    cp.polish_iters = polish;
    cp.poisson_solves = model.poisson_solve_count();
    trace.row(polish, "final", cp.level, cp.criticality, cp.norm_u);

    if (!(cp.criticality <= cfg.criticality_tol) || cp.norm_u <= norm_floor ||
        !(cp.level > 0.0)) {
        MpaNoConvergence err("mpa: no certified critical point within budget",
                             outer + polish, cp.criticality);
        err.best = cp;
        throw err;
    }
    if (regime == Regime::SmallLambda && !cp.within_window)
        throw WindowViolation(
            "mpa: converged outside the cut-off window (||u|| >= M/2); the "
            "point is critical for J_M only",
            cp.norm_u, 0.5 * path.cutoff_M);
    return cp;
}

VerificationReport verify_critical_point(const RadialField& u,
                                         const EnergyModel& model) {
    const auto& e = model.exponents();
    VerificationReport rep;
    rep.norm_u = w1p_norm(u, e.p);
    rep.trivial = rep.norm_u == 0.0;
    if (rep.trivial) {
        rep.j_tilde_valid = theorem_regime(e) == Regime::AnyLambda;
        return rep;
    }
    model.poisson(u, /*fresh_solve=*/true);
    auto grad = model.J_grad(u);
    rep.grad_dual_norm = grad.dual_norm;
    rep.criticality =
        grad.dual_norm / std::max(std::pow(rep.norm_u, e.p - 1.0), 1e-300);
    rep.pde_residual = strong_form_residual(model, u, grad);
    rep.energy = model.J(u);
    if (theorem_regime(e) == Regime::AnyLambda) {
        rep.j_tilde = model.J_tilde(rep.energy);
        rep.j_tilde_valid = true;
    }
    {
        auto sol = model.poisson(u);
        const auto& grid = *u.grid();
        const auto& w = grid.node_weights();
        const auto g = radial_gradient(sol->phi);
        std::vector<double> a(g.size());
        for (std::size_t m = 0; m < a.size(); ++m)
            a[m] = g[m] == 0.0 ? 0.0 : std::pow(std::abs(g[m]), e.q - 2.0);
        std::vector<double> flux(u.size());
        apply_flux_functional(grid, sol->phi.values(), a, flux);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i + 1 < u.size(); ++i) {
            const double src = std::pow(std::abs(u[i]), e.s);
            const double r = flux[i] / w[i] - src;
            num += w[i] * r * r;
            den += w[i] * src * src;
        }
        rep.poisson_residual = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    }
    return rep;
}

}  // namespace pqsp
