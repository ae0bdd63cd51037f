#pragma once

#include <span>
#include <vector>

#include "pqsp/grid.hpp"

namespace pqsp {

// Tridiagonal system solved in place by the Thomas algorithm. Rows cover the
// degrees of freedom 0 .. n-2; the last grid node is a Dirichlet value.
struct Tridiag {
    std::vector<double> sub, diag, sup;

    std::size_t size() const { return diag.size(); }
    // rhs.size() == size(); returns solution of the same length.
    std::vector<double> solve(std::span<const double> rhs) const;
};

// Stiffness of the edge-weighted Laplacian: sum_m a_m wm g(u)_m g(v)_m with
// natural condition at r = 0 and Dirichlet at R. a == nullptr means unit
// weights (the linear radial Laplacian). add_mass appends the nodal L^2 term.
Tridiag assemble_stiffness(const RadialGrid& grid,
                           const std::vector<double>* edge_weights,
                           bool add_mass);

// Functional vector of the weighted flux operator at `values`:
//   out_i = sum_m a_m wm g_m dg_m/dv_i
// i.e. the exact derivative of (1/ex) sum wm (g^2+eps^2)^{ex/2} when
// a_m = (g_m^2+eps^2)^{(ex-2)/2}. Row n-1 is zeroed (Dirichlet).
void apply_flux_functional(const RadialGrid& grid,
                           std::span<const double> values,
                           std::span<const double> edge_weights,
                           std::span<double> out);

// Riesz maps used for dual norms and preconditioned descent directions.
// D^{1,2}: plain stiffness; H^1: stiffness + mass. Both with Dirichlet at R.
class RieszMap {
public:
    RieszMap(GridPtr grid, bool with_mass);

    const GridPtr& grid() const { return grid_; }
    // z = K^{-1} functional (z has full field length, last entry 0)
    std::vector<double> apply_inverse(std::span<const double> functional) const;
    // sqrt(<functional, K^{-1} functional>)
    double dual_norm(std::span<const double> functional) const;

private:
    GridPtr grid_;
    Tridiag op_;
};

// W^{1,2} inner product (gradient midpoint pairing + nodal mass).
double h1_inner(const RadialField& a, const RadialField& b);
double h1_norm(const RadialField& a);

}  // namespace pqsp
