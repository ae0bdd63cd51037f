#include "pqsp/grid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <numbers>

#include "pqsp/errors.hpp"

namespace pqsp {

namespace {

constexpr double kFourPi = 4.0 * std::numbers::pi;

std::atomic<std::uint64_t> g_next_grid_id{1};

std::vector<double> make_nodes(double R, std::size_t n, GradingSpec g) {
    std::vector<double> r(n);
    if (g.kind == GradingSpec::Kind::Uniform ||
        std::abs(g.ratio - 1.0) < 1e-14) {
        const double h = R / static_cast<double>(n - 1);
        for (std::size_t i = 0; i < n; ++i) r[i] = h * static_cast<double>(i);
    } else {
        // spacings d0 * ratio^i summing to R
        const double q = g.ratio;
        const double d0 = R * (q - 1.0) / (std::pow(q, double(n - 1)) - 1.0);
        r[0] = 0.0;
        double d = d0;
        for (std::size_t i = 1; i < n; ++i) {
            r[i] = r[i - 1] + d;
            d *= q;
        }
    }
    r.back() = R;
    return r;
}

// Exact moments of the linear hat basis against 4*pi*r^2 dr. Positive,
// integrates constants exactly on any node layout. Second order.
std::vector<double> p1_weights(const std::vector<double>& r) {
    std::vector<double> w(r.size(), 0.0);
    for (std::size_t i = 0; i + 1 < r.size(); ++i) {
        const double a = r[i], b = r[i + 1], L = b - a;
        const double I2 = (b * b * b - a * a * a) / 3.0;
        const double I3 = (b * b * b * b - a * a * a * a) / 4.0;
        w[i] += kFourPi * (b * I2 - I3) / L;
        w[i + 1] += kFourPi * (I3 - a * I2) / L;
    }
    return w;
}

// Uniform grids get trapezoid-in-r weights with Gregory end corrections
// (coefficients 3/8, 7/6, 23/24). Exact for constants; the corrections at
// r = 0 cancel to O(h^5) for even fields, so smooth decaying integrands
// converge superalgebraically. The r = 0 node would carry zero weight, which
// breaks gradient-field representations, so the P1 share of the first cell
// is transferred from node 1 (total weight, hence the volume, unchanged).
std::vector<double> gregory_weights(const std::vector<double>& r) {
    const std::size_t n = r.size();
    const double h = r[1] - r[0];
    std::vector<double> c(n, 1.0);
    c[0] = c[n - 1] = 3.0 / 8.0;
    c[1] = c[n - 2] = 7.0 / 6.0;
    c[2] = c[n - 3] = 23.0 / 24.0;
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) w[i] = kFourPi * r[i] * r[i] * h * c[i];
    const double d0 = std::numbers::pi * h * h * h / 3.0;
    w[0] += d0;
    w[1] -= d0;
    return w;
}

}  // namespace

std::string GradingSpec::name() const {
    return kind == Kind::Uniform ? "uniform" : "geometric";
}

std::shared_ptr<const RadialGrid> RadialGrid::make(double R, std::size_t n,
                                                   GradingSpec grading) {
    if (!(R > 0.0)) throw ConfigError("grid: truncation radius must be positive");
    if (n < 16) throw ConfigError("grid: need at least 16 nodes");
    if (grading.kind == GradingSpec::Kind::Geometric && !(grading.ratio > 0.0))
        throw ConfigError("grid: geometric ratio must be positive");

    auto g = std::shared_ptr<RadialGrid>(new RadialGrid());
    g->grading_ = grading;
    g->nodes_ = make_nodes(R, n, grading);
    g->h_.resize(n - 1);
    g->mid_.resize(n - 1);
    g->mid_w_.resize(n - 1);
    for (std::size_t i = 0; i + 1 < n; ++i) {
        g->h_[i] = g->nodes_[i + 1] - g->nodes_[i];
        if (!(g->h_[i] > 0.0)) throw ConfigError("grid: nodes not increasing");
        g->mid_[i] = 0.5 * (g->nodes_[i] + g->nodes_[i + 1]);
        g->mid_w_[i] = kFourPi * g->mid_[i] * g->mid_[i] * g->h_[i];
    }
    const bool uniformish = grading.kind == GradingSpec::Kind::Uniform ||
                            std::abs(grading.ratio - 1.0) < 1e-14;
    g->node_w_ = (uniformish && n >= 7) ? gregory_weights(g->nodes_)
                                        : p1_weights(g->nodes_);
    g->id_ = g_next_grid_id.fetch_add(1);
    return g;
}

double RadialGrid::volume() const {
    const double R3 = R() * R() * R();
    return kFourPi / 3.0 * R3;
}

double RadialGrid::integrate(std::span<const double> v) const {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += node_w_[i] * v[i];
    return s;
}

double RadialGrid::integrate_mid(std::span<const double> v) const {
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) s += mid_w_[i] * v[i];
    return s;
}

double Profile::value(double r) const {
    switch (kind) {
        case Kind::Gaussian:
            return amplitude * std::exp(-a * r * r);
        case Kind::Bump: {
            const double x = r / a;
            if (x >= 1.0) return 0.0;
            return amplitude * std::numbers::e * std::exp(-1.0 / (1.0 - x * x));
        }
    }
    return 0.0;
}

double Profile::ddr(double r) const {
    switch (kind) {
        case Kind::Gaussian:
            return -2.0 * a * r * amplitude * std::exp(-a * r * r);
        case Kind::Bump: {
            const double x = r / a;
            if (x >= 1.0) return 0.0;
            const double d = 1.0 - x * x;
            return value(r) * (-2.0 * x / (d * d)) / a;
        }
    }
    return 0.0;
}

Profile Profile::rescaled(double t, double k) const {
    Profile out = *this;
    out.amplitude = amplitude * std::pow(t, k);
    if (kind == Kind::Gaussian)
        out.a = a * t * t;  // exp(-a (t r)^2)
    else
        out.a = a / t;  // support radius shrinks
    return out;
}

std::string Profile::name() const {
    return kind == Kind::Gaussian ? "gaussian" : "bump";
}

RadialField::RadialField(GridPtr grid, std::vector<double> values,
                         std::optional<Profile> profile)
    : grid_(std::move(grid)), values_(std::move(values)), profile_(profile) {
    if (!grid_) throw ConfigError("field: null grid");
    if (values_.size() != grid_->size())
        throw ConfigError("field: value count does not match grid");
    for (double v : values_) {
        if (!std::isfinite(v)) throw ConfigError("field: non-finite value");
    }
}

RadialField RadialField::zeros(GridPtr grid) {
    std::vector<double> v(grid->size(), 0.0);
    return RadialField(std::move(grid), std::move(v));
}

RadialField RadialField::sample(GridPtr grid, const Profile& profile) {
    std::vector<double> v(grid->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = profile.value(grid->nodes()[i]);
    return RadialField(std::move(grid), std::move(v), profile);
}

bool RadialField::same_grid(const RadialField& other) const {
    return grid_ && other.grid_ && grid_->id() == other.grid_->id();
}

void RadialField::require_same_grid(const RadialField& other) const {
    if (!same_grid(other))
        throw GridMismatch("fields live on different grids");
}

std::uint64_t RadialField::content_hash() const {
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    auto mix = [&h](std::uint64_t x) {
        h ^= x;
        h *= 1099511628211ull;
    };
    mix(grid_->id());
    for (double v : values_) {
        std::uint64_t bits;
        static_assert(sizeof bits == sizeof v);
        std::memcpy(&bits, &v, sizeof bits);
        mix(bits);
    }
    return h;
}

RadialField operator+(const RadialField& a, const RadialField& b) {
    a.require_same_grid(b);
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] + b[i];
    return RadialField(a.grid(), std::move(v));
}

RadialField operator-(const RadialField& a, const RadialField& b) {
    a.require_same_grid(b);
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a[i] - b[i];
    return RadialField(a.grid(), std::move(v));
}

RadialField operator*(double c, const RadialField& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = c * a[i];
    std::optional<Profile> prof;
    if (a.profile() && c != 0.0) {
        prof = *a.profile();
        prof->amplitude *= c;
    }
    return RadialField(a.grid(), std::move(v), prof);
}

RadialField axpy(double alpha, const RadialField& x, const RadialField& y) {
    x.require_same_grid(y);
    std::vector<double> v(x.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = alpha * x[i] + y[i];
    return RadialField(x.grid(), std::move(v));
}

std::vector<double> radial_gradient(const RadialField& u) {
    const auto& h = u.grid()->spacings();
    std::vector<double> g(h.size());
    for (std::size_t i = 0; i < g.size(); ++i)
        g[i] = (u[i + 1] - u[i]) / h[i];
    return g;
}

double lp_norm(const RadialField& u, double p) {
    const auto& w = u.grid()->node_weights();
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i)
        s += w[i] * std::pow(std::abs(u[i]), p);
    return std::pow(s, 1.0 / p);
}

double w1p_norm_pow(const RadialField& u, double p) {
    const auto& w = u.grid()->node_weights();
    const auto& wm = u.grid()->mid_weights();
    const auto g = radial_gradient(u);
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        s += wm[i] * std::pow(std::abs(g[i]), p);
    for (std::size_t i = 0; i < u.size(); ++i)
        s += w[i] * std::pow(std::abs(u[i]), p);
    return s;
}

double w1p_norm(const RadialField& u, double p) {
    return std::pow(w1p_norm_pow(u, p), 1.0 / p);
}

double d1q_norm(const RadialField& u, double q) {
    const auto& wm = u.grid()->mid_weights();
    const auto g = radial_gradient(u);
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i)
        s += wm[i] * std::pow(std::abs(g[i]), q);
    return std::pow(s, 1.0 / q);
}

double linf_norm(const RadialField& u) {
    double m = 0.0;
    for (double v : u.values()) m = std::max(m, std::abs(v));
    return m;
}

double linf_diff_rel(const RadialField& a, const RadialField& b) {
    a.require_same_grid(b);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return den > 0.0 ? num / den : num;
}

namespace {

// Cubic Hermite interpolation with finite-difference slopes, even symmetry
// at r = 0 (u'(0) = 0) and zero beyond R.
double hermite_eval(const RadialField& u, double r) {
    const auto& nodes = u.grid()->nodes();
    const std::size_t n = nodes.size();
    if (r >= nodes.back()) return 0.0;
    if (r < 0.0) r = -r;
    auto it = std::upper_bound(nodes.begin(), nodes.end(), r);
    std::size_t i = static_cast<std::size_t>(it - nodes.begin());
    if (i == 0) i = 1;
    if (i >= n) i = n - 1;
    const std::size_t k = i - 1;  // interval [k, k+1]
    const double h = nodes[k + 1] - nodes[k];
    const double t = (r - nodes[k]) / h;

    auto slope = [&](std::size_t j) -> double {
        // centered slope; even extension across 0, one-sided at R
        if (j == 0) return 0.0;
        if (j + 1 >= n) return (u[j] - u[j - 1]) / (nodes[j] - nodes[j - 1]);
        return (u[j + 1] - u[j - 1]) / (nodes[j + 1] - nodes[j - 1]);
    };
    const double m0 = slope(k) * h, m1 = slope(k + 1) * h;
    const double t2 = t * t, t3 = t2 * t;
    return (2 * t3 - 3 * t2 + 1) * u[k] + (t3 - 2 * t2 + t) * m0 +
           (-2 * t3 + 3 * t2) * u[k + 1] + (t3 - t2) * m1;
}

}  // namespace

double interpolate(const RadialField& u, double r) { return hermite_eval(u, r); }

RadialField rescale_field(const RadialField& u, double t, double k,
                          RescaleReport* report, double mass_p,
                          double mass_tolerance) {
    if (!(t > 0.0)) throw ConfigError("rescale: t must be positive");
    const auto& grid = u.grid();
    const double tk = std::pow(t, k);
    std::vector<double> v(u.size());
    std::optional<Profile> prof;
    if (u.profile()) {
        prof = u.profile()->rescaled(t, k);
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = prof->value(grid->nodes()[i]);
    } else {
        for (std::size_t i = 0; i < v.size(); ++i)
            v[i] = tk * interpolate(u, t * grid->nodes()[i]);
    }
    if (report) {
        *report = {};
        if (t < 1.0) {
            // mass of u beyond t*R, which the contraction pulls past R
            const auto& w = grid->node_weights();
            const auto& nodes = grid->nodes();
            double outside = 0.0, total = 0.0;
            for (std::size_t i = 0; i < u.size(); ++i) {
                const double m = w[i] * std::pow(std::abs(u[i]), mass_p);
                total += m;
                if (nodes[i] > t * grid->R()) outside += m;
            }
            if (total > 0.0) {
                report->mass_outside_fraction = outside / total;
                report->extrapolation_warning =
                    report->mass_outside_fraction > mass_tolerance;
            }
        }
    }
    return RadialField(grid, std::move(v), prof);
}

}  // namespace pqsp
