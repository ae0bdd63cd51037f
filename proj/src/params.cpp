#include "pqsp/params.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "pqsp/errors.hpp"

namespace pqsp {

std::string to_string(Regime regime) {
    return regime == Regime::AnyLambda ? "AnyLambda" : "SmallLambda";
}

namespace {

[[noreturn]] void fail(const std::string& name, double value, double lo, double hi) {
    std::ostringstream os;
    os << "parameter " << name << " = " << value
       << " outside admissible open interval (" << lo << ", " << hi << ")";
    throw RangeError(name, os.str());
}

void require_open(const std::string& name, double value, double lo, double hi,
                  double margin) {
    if (!(value > lo + margin && value < hi - margin)) fail(name, value, lo, hi);
}

}  // namespace

ExponentSet validate_params(double p, double q, double s, double r,
                            double lambda, double margin) {
    for (double v : {p, q, s, r, lambda}) {
        if (!std::isfinite(v)) throw RangeError("input", "non-finite parameter");
    }

    require_open("p", p, 1.0, 3.0, margin);

    const double q_lo = std::max(1.0, 3.0 * p / (5.0 * p - 3.0));
    require_open("q", q, q_lo, 3.0, margin);

    ExponentSet e;
    e.p = p;
    e.q = q;
    e.s = s;
    e.r = r;
    e.lambda = lambda;
    e.p_star = 3.0 * p / (3.0 - p);
    e.q_star = 3.0 * q / (3.0 - q);

    const double s_lo = std::max(1.0, (e.q_star - 1.0) * p / e.q_star);
    const double s_hi = (e.q_star - 1.0) * e.p_star / e.q_star;
    require_open("s", s, s_lo, s_hi, margin);

    require_open("r", r, p, e.p_star, margin);

    if (!(lambda > 0.0)) fail("lambda", lambda, 0.0, std::numeric_limits<double>::infinity());

    const double denom = p * (1.0 - q) + q * s;  // > 0 by the s lower bound
    if (!(denom > margin)) fail("s", s, s_lo, s_hi);

    e.r_threshold = p * q * (1.0 + s) / (p * (q - 1.0) + q);
    e.alpha1 = p * q * (s + 1.0) / denom;
    e.alpha2 = p * (p * (q - 1.0) + q) / denom;
    e.alpha3 = r * (p * (q - 1.0) + q) / denom;
    e.scaling_k = (p * (q - 1.0) + q) / denom;
    return e;
}

Regime ExponentSet::regime() const { return theorem_regime(*this); }

Regime theorem_regime(const ExponentSet& e) {
    // Strict inequality: r exactly at the threshold falls to the small-lambda
    // theorem, which covers all of p < r < p*.
    return e.r > e.r_threshold ? Regime::AnyLambda : Regime::SmallLambda;
}

}  // namespace pqsp
