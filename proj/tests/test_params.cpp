#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "pqsp/errors.hpp"
#include "pqsp/params.hpp"

using namespace pqsp;

TEST_CASE("classical (2,2,2,4,1) tuple validates with known derived values") {
    auto e = validate_params(2, 2, 2, 4, 1);
    CHECK(e.p_star == doctest::Approx(6.0));
    CHECK(e.q_star == doctest::Approx(6.0));
    CHECK(e.r_threshold == doctest::Approx(3.0));
    CHECK(e.alpha1 == doctest::Approx(6.0));
    CHECK(e.alpha2 == doctest::Approx(4.0));
    CHECK(e.alpha3 == doctest::Approx(8.0));  // 2r at (2,2,2)
    CHECK(e.scaling_k == doctest::Approx(2.0));
}

TEST_CASE("alpha3 = 2r along (2,2,2,r)") {
    for (double r : {3.5, 4.0, 5.0, 5.9}) {
        auto e = validate_params(2, 2, 2, r, 1);
        CHECK(e.alpha3 == doctest::Approx(2.0 * r));
    }
}

TEST_CASE("boundary p = 3 is rejected naming p") {
    try {
        validate_params(3, 2, 2, 4, 1);
        FAIL("expected RangeError");
    } catch (const RangeError& err) {
        CHECK(err.parameter == "p");
    }
}

TEST_CASE("each inequality failure names the offending parameter") {
    CHECK_THROWS_AS(validate_params(1.0, 2, 2, 4, 1), RangeError);
    CHECK_THROWS_AS(validate_params(2, 3.0, 2, 4, 1), RangeError);
    CHECK_THROWS_AS(validate_params(2, 2, 5.0, 4, 1), RangeError);   // s upper = 5
    CHECK_THROWS_AS(validate_params(2, 2, 1.6, 4, 1), RangeError);   // s lower = 5/3
    CHECK_THROWS_AS(validate_params(2, 2, 2, 2.0, 1), RangeError);   // r <= p
    CHECK_THROWS_AS(validate_params(2, 2, 2, 6.0, 1), RangeError);   // r >= p*
    CHECK_THROWS_AS(validate_params(2, 2, 2, 4, 0.0), RangeError);   // lambda
    CHECK_THROWS_AS(validate_params(1.2, 1.0, 2, 1.5, 1), RangeError);  // q lower 3p/(5p-3)
    const double nan = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(validate_params(nan, 2, 2, 4, 1), RangeError);
}

TEST_CASE("regime tag splits exactly at the r threshold") {
    CHECK(theorem_regime(validate_params(2, 2, 2, 4, 1)) == Regime::AnyLambda);
    CHECK(theorem_regime(validate_params(2, 2, 2, 2.5, 1)) == Regime::SmallLambda);
    // r exactly at threshold: strict inequality required for AnyLambda
    CHECK(theorem_regime(validate_params(2, 2, 2, 3.0, 1)) == Regime::SmallLambda);
}

TEST_CASE("random admissible tuples: exponent identities") {
    std::mt19937_64 rng(20240517);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    int checked = 0;
    for (int it = 0; it < 100000 && checked < 10000; ++it) {
        const double p = 1.0 + 2.0 * uni(rng);
        const double q_lo = std::max(1.0, 3.0 * p / (5.0 * p - 3.0));
        const double q = q_lo + (3.0 - q_lo) * uni(rng);
        const double p_star = 3.0 * p / (3.0 - p);
        const double q_star = 3.0 * q / (3.0 - q);
        const double s_lo = std::max(1.0, (q_star - 1.0) * p / q_star);
        const double s_hi = (q_star - 1.0) * p_star / q_star;
        const double s = s_lo + (s_hi - s_lo) * uni(rng);
        const double r = p + (p_star - p) * uni(rng);
        ExponentSet e;
        try {
            e = validate_params(p, q, s, r, 0.5 + uni(rng));
        } catch (const RangeError&) {
            continue;  // margin rejection near the open boundary
        }
        ++checked;
        // positive denominator, Eq-level identities
        CHECK(e.p * (1.0 - e.q) + e.q * e.s > 0.0);
        CHECK(e.alpha1 - e.alpha2 == doctest::Approx(e.p).epsilon(1e-12));
        if (e.r > e.r_threshold) {
            CHECK(e.alpha1 > 3.0);
            CHECK(e.alpha3 > e.alpha1);
        }
        // determinism
        auto e2 = validate_params(p, q, s, r, e.lambda);
        CHECK(e2.alpha1 == e.alpha1);
        CHECK(e2.alpha3 == e.alpha3);
        CHECK(e2.scaling_k == e.scaling_k);
    }
    CHECK(checked == 10000);
}
