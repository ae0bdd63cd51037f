#include "pqsp/energy.hpp"

#include <cmath>
#include <deque>
#include <mutex>
#include <unordered_map>

#include "pqsp/errors.hpp"
#include "pqsp/linops.hpp"

namespace pqsp {

namespace {

double mollifier(double x) { return x > 0.0 ? std::exp(-1.0 / x) : 0.0; }
double mollifier_d(double x) {
    return x > 0.0 ? std::exp(-1.0 / x) / (x * x) : 0.0;
}

}  // namespace

double bump_h(double t) {
    if (t <= 0.5) return 1.0;
    if (t >= 1.0) return 0.0;
    const double ga = mollifier(1.0 - t);
    const double gb = mollifier(t - 0.5);
    return ga / (ga + gb);
}

double bump_h_prime(double t) {
    if (t <= 0.5 || t >= 1.0) return 0.0;
    const double ga = mollifier(1.0 - t), gb = mollifier(t - 0.5);
    const double da = mollifier_d(1.0 - t), db = mollifier_d(t - 0.5);
    const double den = (ga + gb) * (ga + gb);
    return (-da * gb - ga * db) / den;
}

struct EnergyModel::Cache {
    std::mutex mu;
    std::unordered_map<std::uint64_t, std::shared_ptr<const PoissonSolution>> map;
    std::deque<std::uint64_t> order;
    std::optional<RadialField> warm;
    long solves = 0;
    static constexpr std::size_t kCap = 32;
};

EnergyModel::EnergyModel(ExponentSet e, GridPtr grid, PoissonPolicy policy)
    : e_(e), grid_(std::move(grid)), policy_(policy),
      cache_(std::make_shared<Cache>()) {}

std::shared_ptr<const PoissonSolution> EnergyModel::poisson(
    const RadialField& u, bool fresh_solve) const {
    if (u.grid()->id() != grid_->id())
        throw GridMismatch("energy: field is not on the model grid");
    const std::uint64_t key = u.content_hash();
    if (!fresh_solve) {
        std::lock_guard lock(cache_->mu);
        auto it = cache_->map.find(key);
        if (it != cache_->map.end()) return it->second;
    }
    PoissonProblem prob;
    prob.u = u;
    prob.q = e_.q;
    prob.s = e_.s;
    prob.tol = policy_.tol;
    prob.eps_factor = policy_.eps_factor;
    prob.max_iters = policy_.max_iters;
    std::optional<RadialField> warm;
    if (!fresh_solve) {
        std::lock_guard lock(cache_->mu);
        warm = cache_->warm;
    }
    auto sol = std::make_shared<PoissonSolution>(
        solve_q_poisson(prob, warm ? &*warm : nullptr));
    {
        std::lock_guard lock(cache_->mu);
        ++cache_->solves;
        if (cache_->map.size() >= Cache::kCap && !cache_->order.empty()) {
            cache_->map.erase(cache_->order.front());
            cache_->order.pop_front();
        }
        cache_->map[key] = sol;  // last writer wins; values are deterministic
        cache_->order.push_back(key);
        cache_->warm = sol->phi;
    }
    return sol;
}

void EnergyModel::set_warm_start(const RadialField& phi) const {
    std::lock_guard lock(cache_->mu);
    cache_->warm = phi;
}

void EnergyModel::clear_warm_start() const {
    std::lock_guard lock(cache_->mu);
    cache_->warm.reset();
}

long EnergyModel::poisson_solve_count() const {
    std::lock_guard lock(cache_->mu);
    return cache_->solves;
}

// Base integrals shared by every functional here.
struct EnergyModel::Terms {
    double kin_int = 0;    // int |grad u|^p
    double mass_int = 0;   // int |u|^p
    double nhat = 0;       // int (phi + c_R) |u|^s
    double loc_int = 0;    // int |u|^r
    std::shared_ptr<const PoissonSolution> poisson;
};

EnergyModel::Terms EnergyModel::terms(const RadialField& u) const {
    Terms t;
    const auto& w = grid_->node_weights();
    const auto g = radial_gradient(u);
    for (std::size_t m = 0; m < g.size(); ++m)
        t.kin_int += grid_->mid_weights()[m] * std::pow(std::abs(g[m]), e_.p);
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double au = std::abs(u[i]);
        t.mass_int += w[i] * std::pow(au, e_.p);
        t.loc_int += w[i] * std::pow(au, e_.r);
    }
    if (!nonlocal_disabled_for_tests) {
        t.poisson = poisson(u);
        const auto& phi = t.poisson->phi;
        const double c = t.poisson->farfield_constant;
        for (std::size_t i = 0; i < u.size(); ++i)
            t.nhat += w[i] * (phi[i] + c) * std::pow(std::abs(u[i]), e_.s);
    }
    return t;
}

EnergyBreakdown EnergyModel::J(const RadialField& u) const {
    const Terms t = terms(u);
    EnergyBreakdown b;
    b.kinetic = t.kin_int / e_.p;
    b.mass = t.mass_int / e_.p;
    b.nonlocal = e_.lambda * (e_.q - 1.0) / (e_.q * e_.s) * t.nhat;
    b.local_term = t.loc_int / e_.r;
    b.total = b.kinetic + b.mass + b.nonlocal - b.local_term;
    return b;
}

namespace {

// A0(u)[v] = int |grad u|^{p-2} grad u grad v + |u|^{p-2} u v, as a nodal
// functional vector. Exact derivative of (1/p)(kin_int + mass_int).
std::vector<double> a0_functional(const RadialGrid& grid, const RadialField& u,
                                  double p) {
    const auto g = radial_gradient(u);
    std::vector<double> a(g.size());
    for (std::size_t m = 0; m < a.size(); ++m)
        a[m] = g[m] == 0.0 ? 0.0 : std::pow(std::abs(g[m]), p - 2.0);
    std::vector<double> out(u.size());
    apply_flux_functional(grid, u.values(), a, out);
    const auto& w = grid.node_weights();
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double au = std::abs(u[i]);
        out[i] += au == 0.0 ? 0.0 : w[i] * std::pow(au, p - 2.0) * u[i];
    }
    out.back() = 0.0;
    return out;
}

double signed_pow(double u, double expo) {
    const double au = std::abs(u);
    return au == 0.0 ? 0.0 : std::pow(au, expo - 2.0) * u;
}

}  // namespace

EnergyGradient EnergyModel::J_grad(const RadialField& u) const {
    auto G = a0_functional(*grid_, u, e_.p);
    const auto& w = grid_->node_weights();
    if (!nonlocal_disabled_for_tests) {
        auto sol = poisson(u);
        const double c = sol->farfield_constant;
        for (std::size_t i = 0; i + 1 < u.size(); ++i)
            G[i] += e_.lambda * w[i] * (sol->phi[i] + c) * signed_pow(u[i], e_.s);
    }
    for (std::size_t i = 0; i + 1 < u.size(); ++i)
        G[i] -= w[i] * signed_pow(u[i], e_.r);

    EnergyGradient out;
    std::vector<double> field(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        field[i] = w[i] > 0.0 ? G[i] / w[i] : 0.0;
    out.field = RadialField(grid_, std::move(field));
    RieszMap riesz(grid_, true);
    out.dual_norm = riesz.dual_norm(G);
    out.functional = std::move(G);
    return out;
}

double EnergyModel::J_tilde(const EnergyBreakdown& b) const {
    if (theorem_regime(e_) != Regime::AnyLambda)
        throw RegimeError("J_tilde requires r > r_threshold");
    return (e_.alpha1 - 3.0) * b.kinetic + (e_.alpha2 - 3.0) * b.mass +
           (e_.alpha1 - 3.0) * b.nonlocal - (e_.alpha3 - 3.0) * b.local_term;
}

double EnergyModel::J_tilde(const RadialField& u) const { return J_tilde(J(u)); }

EnergyBreakdown EnergyModel::scaled_energy_closed_form(const RadialField& u,
                                                       double t) const {
    if (!u.profile())
        throw ProfileRequired("scaled_energy_closed_form needs an analytic profile");
    if (theorem_regime(e_) != Regime::AnyLambda)
        throw RegimeError("scaled energy form requires r > r_threshold");
    const EnergyBreakdown base = J(u);
    EnergyBreakdown b;
    b.kinetic = std::pow(t, e_.alpha1 - 3.0) * base.kinetic;
    b.mass = std::pow(t, e_.alpha2 - 3.0) * base.mass;
    b.nonlocal = std::pow(t, e_.alpha1 - 3.0) * base.nonlocal;
    b.local_term = std::pow(t, e_.alpha3 - 3.0) * base.local_term;
    b.total = b.kinetic + b.mass + b.nonlocal - b.local_term;
    return b;
}

double EnergyModel::J_M(const RadialField& u, const CutoffConfig& c) const {
    if (!(c.M > 0.0)) throw ConfigError("cutoff: M must be positive");
    const Terms t = terms(u);
    const double np = t.kin_int + t.mass_int;  // ||u||^p
    const double norm2 = std::pow(np, 2.0 / e_.p);
    const double Z = bump_h(norm2 / (c.M * c.M));
    return np / e_.p +
           e_.lambda * (e_.q - 1.0) / (e_.q * e_.s) * Z * t.nhat -
           t.loc_int / e_.r;
}

EnergyGradient EnergyModel::J_M_grad(const RadialField& u,
                                     const CutoffConfig& c) const {
    if (!(c.M > 0.0)) throw ConfigError("cutoff: M must be positive");
    const Terms t = terms(u);
    const double np = t.kin_int + t.mass_int;
    const double norm = std::pow(np, 1.0 / e_.p);
    const double norm2 = norm * norm;
    const double M2 = c.M * c.M;
    const double Z = bump_h(norm2 / M2);
    const double hp = bump_h_prime(norm2 / M2);

    // d Z_M[v] = h' * (2 ||u||^{2-p} / M^2) A0(u)[v]
    const double chain =
        hp == 0.0 ? 0.0
                  : e_.lambda * t.nhat * (e_.q - 1.0) / (e_.q * e_.s) * hp *
                        2.0 * std::pow(norm, 2.0 - e_.p) / M2;

    auto G = a0_functional(*grid_, u, e_.p);
    const auto& w = grid_->node_weights();
    const double cA = 1.0 + chain;
    for (auto& v : G) v *= cA;
    if (!nonlocal_disabled_for_tests && Z != 0.0) {
        const double cR = t.poisson->farfield_constant;
        for (std::size_t i = 0; i + 1 < u.size(); ++i)
            G[i] += e_.lambda * Z * w[i] * (t.poisson->phi[i] + cR) *
                    signed_pow(u[i], e_.s);
    }
    for (std::size_t i = 0; i + 1 < u.size(); ++i)
        G[i] -= w[i] * signed_pow(u[i], e_.r);

    EnergyGradient out;
    std::vector<double> field(u.size());
    for (std::size_t i = 0; i < u.size(); ++i)
        field[i] = w[i] > 0.0 ? G[i] / w[i] : 0.0;
    out.field = RadialField(grid_, std::move(field));
    RieszMap riesz(grid_, true);
    out.dual_norm = riesz.dual_norm(G);
    out.functional = std::move(G);
    return out;
}

}  // namespace pqsp
