#pragma once

// Beta-Binomial posterior over PPV under a Beta(1,1) prior, equal-tailed credible intervals and
// the success/futility stopping rule.

#include <compare>
#include <cstdint>
#include <optional>
#include <string_view>

namespace chartval {

/// s outcome-positive charts among k reviewed claims+ charts; posterior Beta(1+s, 1+k-s).
struct PosteriorState {
    std::uint64_t successes = 0;
    std::uint64_t trials = 0;

    double shape_a() const noexcept { return 1.0 + static_cast<double>(successes); }
    double shape_b() const noexcept { return 1.0 + static_cast<double>(trials - successes); }

    auto operator<=>(const PosteriorState&) const = default;
};

PosteriorState posterior_update(PosteriorState state, bool positive) noexcept;

/// Regularized incomplete beta I_x(a, b). Continued fraction, symmetry switch at x > a/(a+b).
double incomplete_beta(double a, double b, double x);

/// Density of Beta(a, b) at x.
double beta_density(double a, double b, double x);

/// x with I_x(a, b) = p. Throws DomainError unless a > 0, b > 0 and 0 < p < 1.
double beta_quantile(double a, double b, double p);

struct CredibleInterval {
    double lower = 0.0;
    double upper = 1.0;
    double alpha = 0.05;
};

CredibleInterval credible_interval(PosteriorState state, double alpha = 0.05);

/// Raw proportion s/k. Throws UndefinedMetric when k == 0.
double point_estimate(PosteriorState state);

/// (1+s)/(2+k), reported alongside the raw proportion.
double posterior_mean(PosteriorState state) noexcept;

struct StoppingRule {
    double threshold = 0.75;
    double alpha = 0.05;
};

enum class Verdict { Continue, StopSuccess, StopFutility };

std::string_view to_string(Verdict v) noexcept;
Verdict parse_verdict(std::string_view text);

struct StoppingDecision {
    Verdict verdict = Verdict::Continue;
    CredibleInterval interval;
    std::optional<double> point_estimate; // empty when k == 0
    double posterior_mean = 0.5;
};

/// StopSuccess iff lower > threshold, StopFutility iff upper < threshold; ties continue.
StoppingDecision evaluate_stopping(PosteriorState state, const StoppingRule& rule);

} // namespace chartval
