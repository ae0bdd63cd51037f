#include "pqsp/linops.hpp"

#include <cmath>

#include "pqsp/errors.hpp"

namespace pqsp {

std::vector<double> Tridiag::solve(std::span<const double> rhs) const {
    const std::size_t n = size();
    std::vector<double> cp(n), dp(n), x(n);
    cp[0] = sup[0] / diag[0];
    dp[0] = rhs[0] / diag[0];
    for (std::size_t i = 1; i < n; ++i) {
        const double m = diag[i] - sub[i] * cp[i - 1];
        cp[i] = sup[i] / m;
        dp[i] = (rhs[i] - sub[i] * dp[i - 1]) / m;
    }
    x[n - 1] = dp[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = dp[i] - cp[i] * x[i + 1];
    return x;
}

Tridiag assemble_stiffness(const RadialGrid& grid,
                           const std::vector<double>* edge_weights,
                           bool add_mass) {
    const std::size_t n = grid.size();
    const std::size_t N = n - 1;  // unknowns 0..n-2
    const auto& wm = grid.mid_weights();
    const auto& h = grid.spacings();
    std::vector<double> k(N);
    for (std::size_t m = 0; m < N; ++m) {
        const double a = edge_weights ? (*edge_weights)[m] : 1.0;
        k[m] = a * wm[m] / (h[m] * h[m]);
    }
    Tridiag t;
    t.sub.assign(N, 0.0);
    t.diag.assign(N, 0.0);
    t.sup.assign(N, 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        t.diag[i] = k[i] + (i > 0 ? k[i - 1] : 0.0);
        if (i > 0) t.sub[i] = -k[i - 1];
        if (i + 1 < N) t.sup[i] = -k[i];
    }
    if (add_mass) {
        const auto& w = grid.node_weights();
        for (std::size_t i = 0; i < N; ++i) t.diag[i] += w[i];
    }
    return t;
}

void apply_flux_functional(const RadialGrid& grid,
                           std::span<const double> values,
                           std::span<const double> edge_weights,
                           std::span<double> out) {
    const auto& wm = grid.mid_weights();
    const auto& h = grid.spacings();
    const std::size_t n = values.size();
    for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
    for (std::size_t m = 0; m + 1 < n; ++m) {
        const double g = (values[m + 1] - values[m]) / h[m];
        const double e = wm[m] * edge_weights[m] * g / h[m];
        out[m] -= e;
        out[m + 1] += e;
    }
    out[n - 1] = 0.0;
}

RieszMap::RieszMap(GridPtr grid, bool with_mass)
    : grid_(std::move(grid)),
      op_(assemble_stiffness(*grid_, nullptr, with_mass)) {}

std::vector<double> RieszMap::apply_inverse(
    std::span<const double> functional) const {
    const std::size_t N = op_.size();
    std::vector<double> head(functional.begin(), functional.begin() + N);
    auto z = op_.solve(head);
    z.push_back(0.0);  // Dirichlet node
    return z;
}

double RieszMap::dual_norm(std::span<const double> functional) const {
    auto z = apply_inverse(functional);
    double s = 0.0;
    for (std::size_t i = 0; i < functional.size(); ++i) s += z[i] * functional[i];
    return std::sqrt(std::max(0.0, s));
}

double h1_inner(const RadialField& a, const RadialField& b) {
    a.require_same_grid(b);
    const auto& g = *a.grid();
    const auto ga = radial_gradient(a);
    const auto gb = radial_gradient(b);
    double s = 0.0;
    for (std::size_t m = 0; m < ga.size(); ++m)
        s += g.mid_weights()[m] * ga[m] * gb[m];
    for (std::size_t i = 0; i < a.size(); ++i)
        s += g.node_weights()[i] * a[i] * b[i];
    return s;
}

double h1_norm(const RadialField& a) {
    return std::sqrt(std::max(0.0, h1_inner(a, a)));
}

}  // namespace pqsp
