#pragma once

#include <string>

namespace pqsp {

enum class Regime {
    AnyLambda,    // r > r_threshold: scaling-path machinery applies for every lambda > 0
    SmallLambda,  // p < r <= r_threshold: cut-off functional route, lambda must be small
};

std::string to_string(Regime regime);

// Validated exponent tuple together with every derived exponent the rest of
// the library consumes. Immutable after construction; cheap to copy.
//
// Admissible region:
//   1 < p < 3,
//   max{1, 3p/(5p-3)} < q < 3,
//   p < r < p* = 3p/(3-p),
//   max{1, (q*-1)p/q*} < s < (q*-1)p*/q*   with q* = 3q/(3-q),
//   lambda > 0.
// The s-range guarantees p(1-q)+qs > 0, so the alpha exponents below are
// finite with positive denominator.
struct ExponentSet {
    double p = 0, q = 0, s = 0, r = 0, lambda = 0;

    // derived
    double p_star = 0;       // 3p/(3-p)
    double q_star = 0;       // 3q/(3-q)
    double r_threshold = 0;  // pq(1+s)/(p(q-1)+q)
    double alpha1 = 0;       // pq(s+1)/(p(1-q)+qs)
    double alpha2 = 0;       // p(p(q-1)+q)/(p(1-q)+qs)
    double alpha3 = 0;       // r(p(q-1)+q)/(p(1-q)+qs)
    double scaling_k = 0;    // (p(q-1)+q)/(p(1-q)+qs), exponent of u_t(x)=t^k u(tx)

    Regime regime() const;
};

// Checks every strict inequality with margin `margin` (boundary values fail
// deterministically) and fills in the derived exponents. Throws RangeError
// naming the first violated inequality and the admissible interval for that
// parameter given the others.
ExponentSet validate_params(double p, double q, double s, double r,
                            double lambda, double margin = 1e-12);

Regime theorem_regime(const ExponentSet& e);

}  // namespace pqsp
