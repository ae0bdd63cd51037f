#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pqsp {

// Node placement on [0, R]. Geometric grading concentrates nodes near the
// origin (spacing grows by `ratio` per cell), which is what resolves the
// near-threshold regime where critical points concentrate at small radius.
struct GradingSpec {
    enum class Kind { Uniform, Geometric };
    Kind kind = Kind::Uniform;
    double ratio = 1.0;

    static GradingSpec uniform() { return {}; }
    static GradingSpec geometric(double ratio) {
        return {Kind::Geometric, ratio};
    }
    std::string name() const;
};

// Radially symmetric discretization of R^3, truncated at radius R with the
// convention that fields carry a homogeneous Dirichlet value at the last node.
//
// Quadrature embeds the 4*pi*r^2 volume factor:
//   integrate(f) = sum_i node_weight[i] * f_i  ~  int_{R^3} f(|x|) dx
// Node weights integrate constants exactly on any grid. Gradients live on
// cell midpoints with per-cell weights mid_weight; the pairing
//   sum_m mid_weight[m] * sigma(g_u[m]) * g_v[m]
// is by construction the exact adjoint of the discrete flux operator, so the
// energies built here and their gradients never disagree.
class RadialGrid {
public:
    static std::shared_ptr<const RadialGrid> make(double R, std::size_t n,
                                                  GradingSpec grading = {});

    double R() const { return nodes_.back(); }
    std::size_t size() const { return nodes_.size(); }
    const std::vector<double>& nodes() const { return nodes_; }
    const std::vector<double>& node_weights() const { return node_w_; }
    const std::vector<double>& midpoints() const { return mid_; }
    const std::vector<double>& mid_weights() const { return mid_w_; }
    const std::vector<double>& spacings() const { return h_; }
    GradingSpec grading() const { return grading_; }
    double volume() const;  // (4/3) pi R^3

    double integrate(std::span<const double> nodal_values) const;
    double integrate_mid(std::span<const double> midpoint_values) const;

    // Identity used to reject mixing fields from different grids.
    std::uint64_t id() const { return id_; }

private:
    RadialGrid() = default;
    std::vector<double> nodes_, node_w_, mid_, mid_w_, h_;
    GradingSpec grading_;
    std::uint64_t id_ = 0;
};

using GridPtr = std::shared_ptr<const RadialGrid>;

// Analytic profile tag. Fields carrying one evaluate rescalings exactly,
// which keeps the scaling-law tests free of interpolation error.
struct Profile {
    enum class Kind { Gaussian, Bump };
    Kind kind = Kind::Gaussian;
    double amplitude = 1.0;
    // Gaussian: amplitude * exp(-a r^2), a > 0.
    // Bump: amplitude * e * exp(-1/(1-(r/a)^2)) for r < a, else 0 (value 'amplitude' at 0).
    double a = 1.0;

    double value(double r) const;
    double ddr(double r) const;
    // t^k * f(t r) is again a profile of the same kind.
    Profile rescaled(double t, double k) const;
    std::string name() const;
};

struct RescaleReport {
    bool extrapolation_warning = false;  // t < 1 pushed mass outside [0, R]
    double mass_outside_fraction = 0.0;  // of total L^p mass (p from caller)
};

// Scalar field sampled at grid nodes, optionally tagged with the analytic
// profile it samples. Value semantics; grids are shared immutable.
class RadialField {
public:
    RadialField() = default;
    RadialField(GridPtr grid, std::vector<double> values,
                std::optional<Profile> profile = std::nullopt);
    static RadialField zeros(GridPtr grid);
    static RadialField sample(GridPtr grid, const Profile& profile);

    const GridPtr& grid() const { return grid_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& mutable_values() {
        profile_.reset();
        return values_;
    }
    const std::optional<Profile>& profile() const { return profile_; }
    std::size_t size() const { return values_.size(); }
    double operator[](std::size_t i) const { return values_[i]; }

    bool same_grid(const RadialField& other) const;
    void require_same_grid(const RadialField& other) const;

    std::uint64_t content_hash() const;

private:
    GridPtr grid_;
    std::vector<double> values_;
    std::optional<Profile> profile_;
};

// Linear algebra on fields (grid identity checked, profile tag kept only
// where the operation preserves it exactly).
RadialField operator+(const RadialField& a, const RadialField& b);
RadialField operator-(const RadialField& a, const RadialField& b);
RadialField operator*(double c, const RadialField& a);
RadialField axpy(double alpha, const RadialField& x, const RadialField& y);  // alpha*x + y

// Midpoint finite-difference gradient; entry m approximates du/dr at
// midpoints()[m]. Exact for fields linear in r.
std::vector<double> radial_gradient(const RadialField& u);

double lp_norm(const RadialField& u, double p);     // (int |u|^p)^{1/p}
double w1p_norm(const RadialField& u, double p);    // (int |grad u|^p + |u|^p)^{1/p}
double w1p_norm_pow(const RadialField& u, double p);  // int |grad u|^p + |u|^p
double d1q_norm(const RadialField& u, double q);    // (int |grad u|^q)^{1/q}
double linf_norm(const RadialField& u);
double linf_diff_rel(const RadialField& a, const RadialField& b);

// u_t(r) = t^k u(t r), values beyond R extrapolated as 0. Analytic-profile
// fields are re-sampled exactly; sampled fields use a clamped cubic
// interpolant with even symmetry at r = 0.
RadialField rescale_field(const RadialField& u, double t, double k,
                          RescaleReport* report = nullptr,
                          double mass_p = 2.0,
                          double mass_tolerance = 1e-12);

// Cubic interpolation of a sampled field (even at 0, zero beyond R).
double interpolate(const RadialField& u, double r);

}  // namespace pqsp
