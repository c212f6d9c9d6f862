#include "chartval/bayes.hpp"

#include "chartval/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace chartval {

PosteriorState posterior_update(PosteriorState state, bool positive) noexcept {
    ++state.trials;
    if (positive) ++state.successes;
    return state;
}

namespace {

constexpr double kTiny = 1e-300;
constexpr double kCfEps = 1e-15;
constexpr int kCfMaxIter = 100000;

double log_beta_fn(double a, double b) {
    return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

// Modified Lentz evaluation of the incomplete-beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::fabs(d) < kTiny) d = kTiny;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kCfMaxIter; ++m) {
        const double m2 = 2.0 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::fabs(d) < kTiny) d = kTiny;
        c = 1.0 + aa / c;
        if (std::fabs(c) < kTiny) c = kTiny;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < kCfEps) return h;
    }
    throw DomainError("incomplete beta continued fraction did not converge");
}

void check_shapes(double a, double b) {
    if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
        throw DomainError("beta shapes must be positive and finite");
    }
}

} // namespace

double incomplete_beta(double a, double b, double x) {
    check_shapes(a, b);
    if (!(x >= 0.0 && x <= 1.0)) throw DomainError("incomplete beta argument outside [0,1]");
    if (x == 0.0) return 0.0;
    if (x == 1.0) return 1.0;
    const double log_front = a * std::log(x) + b * std::log1p(-x) - log_beta_fn(a, b);
    if (x < a / (a + b)) {
        return std::exp(log_front) * beta_continued_fraction(a, b, x) / a;
    }
    return 1.0 - std::exp(log_front) * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double beta_density(double a, double b, double x) {
    check_shapes(a, b);
    if (x < 0.0 || x > 1.0) return 0.0;
    if (x == 0.0) return a < 1.0 ? std::numeric_limits<double>::infinity() : (a == 1.0 ? b : 0.0);
    if (x == 1.0) return b < 1.0 ? std::numeric_limits<double>::infinity() : (b == 1.0 ? a : 0.0);
    return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_fn(a, b));
}

double beta_quantile(double a, double b, double p) {
    check_shapes(a, b);
    if (!(p > 0.0 && p < 1.0)) throw DomainError("quantile probability must lie in (0,1)");

    // Safeguarded Newton: [lo, hi] always brackets the root; a Newton step that leaves the
    // bracket is replaced by bisection.
    double lo = 0.0;
    double hi = 1.0;
    double x = a / (a + b);
    for (int iter = 0; iter < 400; ++iter) {
        const double f = incomplete_beta(a, b, x) - p;
        if (f == 0.0) return x;
        if (f < 0.0) lo = x; else hi = x;

        const double dens = beta_density(a, b, x);
        double next = (dens > 0.0 && std::isfinite(dens)) ? x - f / dens : -1.0;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::fabs(next - x) <= 1e-15 * next || hi - lo <= 1e-15 * hi) return next;
        x = next;
    }
    return x;
}

CredibleInterval credible_interval(PosteriorState state, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw DomainError("alpha must lie in (0,1)");
    if (state.successes > state.trials) throw DomainError("successes exceed trials");
    const double a = state.shape_a();
    const double b = state.shape_b();
    return {beta_quantile(a, b, alpha / 2.0), beta_quantile(a, b, 1.0 - alpha / 2.0), alpha};
}

double point_estimate(PosteriorState state) {
    if (state.trials == 0) throw UndefinedMetric("PPV undefined: no reviewed claims+ charts");
    return static_cast<double>(state.successes) / static_cast<double>(state.trials);
}

double posterior_mean(PosteriorState state) noexcept {
    return (1.0 + static_cast<double>(state.successes)) / (2.0 + static_cast<double>(state.trials));
}

std::string_view to_string(Verdict v) noexcept {
    switch (v) {
    case Verdict::Continue: return "Continue";
    case Verdict::StopSuccess: return "StopSuccess";
    case Verdict::StopFutility: return "StopFutility";
    }
    return "Continue";
}

Verdict parse_verdict(std::string_view text) {
    if (text == "Continue") return Verdict::Continue;
    if (text == "StopSuccess") return Verdict::StopSuccess;
    if (text == "StopFutility") return Verdict::StopFutility;
    throw ParseError("unknown verdict '" + std::string(text) + "'");
}

StoppingDecision evaluate_stopping(PosteriorState state, const StoppingRule& rule) {
    if (!(rule.threshold > 0.0 && rule.threshold < 1.0)) {
        throw DomainError("stopping threshold must lie in (0,1)");
    }
    StoppingDecision d;
    d.interval = credible_interval(state, rule.alpha);
    if (state.trials > 0) d.point_estimate = point_estimate(state);
    d.posterior_mean = posterior_mean(state);
    if (d.interval.lower > rule.threshold) {
        d.verdict = Verdict::StopSuccess;
    } else if (d.interval.upper < rule.threshold) {
        d.verdict = Verdict::StopFutility;
    }
    return d;
}

} // namespace chartval
