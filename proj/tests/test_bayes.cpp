#include "chartval/bayes.hpp"
#include "chartval/error.hpp"
#include "chartval/rng.hpp"
#include "support/oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace chartval;

TEST_CASE("posterior update counts successes and trials") {
    PosteriorState s;
    s = posterior_update(s, true);
    s = posterior_update(s, false);
    s = posterior_update(s, true);
    CHECK(s.successes == 2);
    CHECK(s.trials == 3);
    CHECK(s.shape_a() == 3.0);
    CHECK(s.shape_b() == 2.0);
}

TEST_CASE("closed-form quantiles of Beta(a,1) and Beta(1,b)") {
    CHECK(beta_quantile(21, 1, 0.025) == doctest::Approx(std::pow(0.025, 1.0 / 21)).epsilon(1e-12));
    CHECK(std::abs(beta_quantile(21, 1, 0.025) - 0.838902) < 1e-6);
    CHECK(std::abs(beta_quantile(21, 1, 0.975) - 0.998795) < 1e-6);
    CHECK(std::abs(beta_quantile(1, 11, 0.975) - (1 - std::pow(0.025, 1.0 / 11))) < 1e-12);
    CHECK(std::abs(beta_quantile(16, 1, 0.025) - 0.794093) < 1e-6);
    CHECK(std::abs(beta_quantile(11, 1, 0.025) - 0.715086) < 1e-6);
    CHECK(std::abs(beta_quantile(1, 6, 0.975) - 0.459258) < 1e-6);
}

TEST_CASE("credible interval of Beta(7,5)") {
    const CredibleInterval ci = credible_interval({6, 10});
    CHECK(std::abs(ci.lower - 0.307905) < 1e-6);
    CHECK(std::abs(ci.upper - 0.832512) < 1e-6);
}

TEST_CASE("incomplete beta agrees with quadrature oracle") {
    Rng rng(5);
    for (int i = 0; i < 300; ++i) {
        const double a = 1.0 + static_cast<double>(rng.below(60)) + rng.uniform();
        const double b = 1.0 + static_cast<double>(rng.below(60)) + rng.uniform();
        const double x = 0.001 + 0.998 * rng.uniform();
        const double want = oracle::beta_cdf(a, b, x);
        REQUIRE(std::abs(incomplete_beta(a, b, x) - want) < 1e-10);
    }
}

TEST_CASE("quantile agrees with bisection oracle") {
    Rng rng(6);
    for (int i = 0; i < 60; ++i) {
        const double a = 1.0 + static_cast<double>(rng.below(40));
        const double b = 1.0 + static_cast<double>(rng.below(40));
        const double p = 0.01 + 0.98 * rng.uniform();
        REQUIRE(std::abs(beta_quantile(a, b, p) - oracle::beta_quantile(a, b, p)) < 1e-8);
    }
}

TEST_CASE("quantile inverts the incomplete beta") {
    Rng rng(7);
    for (int i = 0; i < 2000; ++i) {
        const double a = 0.2 + 300.0 * rng.uniform() * rng.uniform();
        const double b = 0.2 + 300.0 * rng.uniform() * rng.uniform();
        const double p = 1e-6 + (1 - 2e-6) * rng.uniform();
        const double q = beta_quantile(a, b, p);
        REQUIRE(q >= 0.0);
        REQUIRE(q <= 1.0);
        REQUIRE(std::abs(incomplete_beta(a, b, q) - p) < 1e-9);
    }
}

TEST_CASE("incomplete beta symmetry and monotonicity") {
    Rng rng(8);
    for (int i = 0; i < 500; ++i) {
        const double a = 0.5 + 50 * rng.uniform();
        const double b = 0.5 + 50 * rng.uniform();
        const double x = rng.uniform();
        CHECK(std::abs(incomplete_beta(a, b, x) + incomplete_beta(b, a, 1 - x) - 1.0) < 1e-12);
        const double y = std::min(1.0, x + 0.01);
        CHECK(incomplete_beta(a, b, x) <= incomplete_beta(a, b, y) + 1e-15);
    }
    CHECK(incomplete_beta(3, 4, 0.0) == 0.0);
    CHECK(incomplete_beta(3, 4, 1.0) == 1.0);
}

TEST_CASE("quantile domain errors") {
    CHECK_THROWS_AS(beta_quantile(0, 1, 0.5), DomainError);
    CHECK_THROWS_AS(beta_quantile(1, -1, 0.5), DomainError);
    CHECK_THROWS_AS(beta_quantile(1, 1, 0.0), DomainError);
    CHECK_THROWS_AS(beta_quantile(1, 1, 1.0), DomainError);
}

TEST_CASE("point estimate and posterior mean") {
    CHECK_THROWS_WITH_AS(point_estimate({0, 0}), "PPV undefined: no reviewed claims+ charts", UndefinedMetric);
    CHECK(point_estimate({35, 58}) == doctest::Approx(35.0 / 58.0));
    CHECK(posterior_mean({0, 0}) == 0.5);
    CHECK(posterior_mean({35, 58}) == doctest::Approx(36.0 / 60.0));
}

TEST_CASE("stopping rule: success, futility and strict ties") {
    const StoppingRule rule{0.75, 0.05};
    CHECK(evaluate_stopping({10, 10}, rule).verdict == Verdict::Continue);
    CHECK(evaluate_stopping({15, 15}, rule).verdict == Verdict::StopSuccess);
    CHECK(evaluate_stopping({0, 5}, rule).verdict == Verdict::StopFutility);
    CHECK(evaluate_stopping({0, 0}, rule).verdict == Verdict::Continue);
    CHECK_FALSE(evaluate_stopping({0, 0}, rule).point_estimate.has_value());

    // threshold placed exactly on a bound: neither strict inequality holds
    const double lower = credible_interval({15, 15}).lower;
    CHECK(evaluate_stopping({15, 15}, {lower, 0.05}).verdict == Verdict::Continue);
    const double upper = credible_interval({0, 5}).upper;
    CHECK(evaluate_stopping({0, 5}, {upper, 0.05}).verdict == Verdict::Continue);
}

TEST_CASE("interval narrows and stays ordered as data accumulates") {
    Rng rng(9);
    for (int run = 0; run < 50; ++run) {
        PosteriorState s;
        double prev_width = 1.0;
        for (int i = 0; i < 200; ++i) {
            s = posterior_update(s, rng.bernoulli(0.6));
            const CredibleInterval ci = credible_interval(s);
            REQUIRE(ci.lower < ci.upper);
            REQUIRE(ci.lower >= 0.0);
            REQUIRE(ci.upper <= 1.0);
            if (i % 50 == 49) {
                CHECK(ci.upper - ci.lower < prev_width);
                prev_width = ci.upper - ci.lower;
            }
        }
    }
}

TEST_CASE("verdict names round-trip") {
    for (const Verdict v : {Verdict::Continue, Verdict::StopSuccess, Verdict::StopFutility}) {
        CHECK(parse_verdict(to_string(v)) == v);
    }
    CHECK_THROWS(parse_verdict("Maybe"));
}
