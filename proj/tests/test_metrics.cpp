#include "chartval/error.hpp"
#include "chartval/metrics.hpp"
#include "chartval/rng.hpp"

#include "support/oracle.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace chartval;

namespace {

StratumCounts pop(std::size_t g1, std::size_t g3, std::size_t rev, std::size_t nonrev, std::size_t neg) {
    return {g1, g3, rev, nonrev, neg};
}

std::vector<std::int32_t> labels(std::size_t positives, std::size_t n) {
    std::vector<std::int32_t> v(n, 0);
    std::fill(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(positives), 1);
    return v;
}

// plain-loop replica of the stratified percentile bootstrap for one metric
double type7(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = (static_cast<double>(v.size()) - 1) * q;
    const std::size_t lo = static_cast<std::size_t>(h);
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

} // namespace

TEST_CASE("hand-worked weighted confusion matrix") {
    // 1000 patients: 890 group 1, 2 group 3, 30 claims+ (25 reviewable), 78 claims-/EHR+
    const auto p = pop(890, 2, 25, 5, 78);
    SampledLabels s{labels(12, 20), labels(1, 20)};
    const auto m = build_confusion(p, s);
    CHECK(m.tp == doctest::Approx(18.0).epsilon(1e-12));
    CHECK(m.fp == doctest::Approx(12.0).epsilon(1e-12));
    CHECK(m.fn == doctest::Approx(5.9).epsilon(1e-12));
    CHECK(m.tn == doctest::Approx(964.1).epsilon(1e-12));
    CHECK(m.total() == doctest::Approx(1000.0).epsilon(1e-12));
    CHECK(ppv(m) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(sensitivity(m) == doctest::Approx(18.0 / 23.9).epsilon(1e-12));
    CHECK(specificity(m) == doctest::Approx(964.1 / 976.1).epsilon(1e-12));
    CHECK(npv(m) == doctest::Approx(964.1 / 970.0).epsilon(1e-12));
    CHECK(m.by_stratum[index_of(Stratum::Group3AssumedPositive)].fn == 2.0);
    CHECK(m.by_stratum[index_of(Stratum::Group1AssumedNegative)].tn == 890.0);
    CHECK(m.by_stratum[index_of(Stratum::ClaimsNegEhrPos)].fn == doctest::Approx(3.9));
    CHECK(m.by_stratum[index_of(Stratum::ClaimsPosReviewable)].tp == doctest::Approx(15.0));
    CHECK(m.by_stratum[index_of(Stratum::ClaimsPosNonReviewable)].fp == doctest::Approx(2.0));
}

TEST_CASE("full review reproduces raw counts on random cohorts") {
    Rng rng(8675309);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<oracle::Reviewed> rows;
        const std::size_t n_pos = 1 + rng.below(60);
        const std::size_t n_neg = 1 + rng.below(80);
        const std::size_t g1 = rng.below(500);
        const std::size_t g3 = rng.below(10);
        SampledLabels s;
        for (std::size_t i = 0; i < n_pos; ++i) {
            const bool y = rng.bernoulli(0.6);
            rows.push_back({true, y});
            s.claims_pos.push_back(y);
        }
        for (std::size_t i = 0; i < n_neg; ++i) {
            const bool y = rng.bernoulli(0.1);
            rows.push_back({false, y});
            s.claims_neg.push_back(y);
        }
        for (std::size_t i = 0; i < g1; ++i) rows.push_back({false, false});
        for (std::size_t i = 0; i < g3; ++i) rows.push_back({false, true});
        std::shuffle(s.claims_pos.begin(), s.claims_pos.end(), std::mt19937_64(trial));

        const auto want = oracle::raw_metrics(rows);
        const auto m = build_confusion(pop(g1, g3, n_pos, 0, n_neg), s);
        CHECK(m.tp == want.tp);
        CHECK(m.fp == want.fp);
        CHECK(m.fn == want.fn);
        CHECK(m.tn == want.tn);
        if (want.ppv) CHECK(ppv(m) == *want.ppv);
        if (want.npv) CHECK(npv(m) == *want.npv);
        if (want.sensitivity) CHECK(sensitivity(m) == *want.sensitivity);
        else CHECK_THROWS_AS(sensitivity(m), UndefinedMetric);
        if (want.specificity) CHECK(specificity(m) == *want.specificity);
    }
}

TEST_CASE("undefined projections") {
    CHECK_THROWS_WITH_AS(build_confusion(pop(1, 0, 4, 0, 4), {{}, labels(0, 2)}),
                         "PPV undefined: no reviewed claims+ charts", UndefinedMetric);
    CHECK_THROWS_AS(build_confusion(pop(1, 0, 4, 0, 4), {labels(1, 2), {}}), UndefinedMetric);
    // no claims+ patients at all is fine for the matrix, not for PPV
    const auto m = build_confusion(pop(10, 1, 0, 0, 4), {{}, labels(1, 2)});
    CHECK(m.tp == 0.0);
    CHECK_THROWS_AS(ppv(m), UndefinedMetric);
    CHECK(npv(m) == doctest::Approx(12.0 / 15.0));
}

TEST_CASE("bootstrap matches a plain-loop replica") {
    const auto p = pop(5000, 12, 200, 40, 300);
    SampledLabels s{labels(13, 25), labels(2, 25)};
    std::shuffle(s.claims_pos.begin(), s.claims_pos.end(), std::mt19937_64(1));
    std::shuffle(s.claims_neg.begin(), s.claims_neg.end(), std::mt19937_64(2));
    const BootstrapOptions boot{500, 99};
    const auto r = performance_report(p, s, 0.05, boot, "full");

    std::vector<double> sens;
    for (std::size_t i = 0; i < boot.replicates; ++i) {
        Rng rng(derive_seed(boot.seed, i));
        double a = 0, b = 0;
        for (std::size_t j = 0; j < s.claims_pos.size(); ++j) a += s.claims_pos[rng.below(s.claims_pos.size())];
        for (std::size_t j = 0; j < s.claims_neg.size(); ++j) b += s.claims_neg[rng.below(s.claims_neg.size())];
        const double tp = a * 240.0 / 25.0;
        const double fn = b * 300.0 / 25.0 + 12.0;
        sens.push_back(tp / (tp + fn));
    }
    CHECK(r.sensitivity.lower == doctest::Approx(std::min(type7(sens, 0.025), r.sensitivity.value)).epsilon(1e-12));
    CHECK(r.sensitivity.upper == doctest::Approx(std::max(type7(sens, 0.975), r.sensitivity.value)).epsilon(1e-12));
    CHECK(r.bootstrap_replicates == 500);
    CHECK(r.bootstrap_skipped == 0);
}

TEST_CASE("bootstrap is seeded and behaves sensibly") {
    const auto p = pop(3000, 5, 120, 30, 200);
    SampledLabels s{labels(9, 20), labels(1, 20)};
    const auto a = performance_report(p, s, 0.05, {400, 7}, "full");
    const auto b = performance_report(p, s, 0.05, {400, 7}, "full");
    const auto c = performance_report(p, s, 0.05, {400, 8}, "full");
    CHECK(a.npv.lower == b.npv.lower);
    CHECK(a.sensitivity.upper == b.sensitivity.upper);
    CHECK((a.sensitivity.lower != c.sensitivity.lower || a.sensitivity.upper != c.sensitivity.upper));
    for (const auto* e : {&a.npv, &a.sensitivity, &a.specificity}) {
        CHECK(e->lower <= e->value);
        CHECK(e->value <= e->upper);
        CHECK(e->lower >= 0.0);
        CHECK(e->upper <= 1.0);
    }
    // a wider nominal level gives a wider interval
    const auto wide = performance_report(p, s, 0.01, {400, 7}, "full");
    CHECK(wide.sensitivity.upper - wide.sensitivity.lower >= a.sensitivity.upper - a.sensitivity.lower);

    // zero replicates collapse to the point
    const auto none = performance_report(p, s, 0.05, {0, 7}, "full");
    CHECK(none.npv.lower == none.npv.value);
    CHECK(none.npv.upper == none.npv.value);

    // no variance in either sample: nothing to resample
    const auto flat = performance_report(p, {labels(20, 20), labels(0, 20)}, 0.05, {200, 3}, "full");
    CHECK(flat.npv.lower == flat.npv.value);
    CHECK(flat.npv.upper == flat.npv.value);
}

TEST_CASE("report PPV uses the Beta posterior") {
    const auto r = performance_report(pop(100, 1, 30, 0, 10), {labels(6, 10), labels(0, 10)}, 0.05,
                                      {0, 1}, "at-stop");
    CHECK(r.snapshot == "at-stop");
    CHECK(r.ppv.value == doctest::Approx(0.6));
    CHECK(r.ppv.lower == doctest::Approx(0.307905).epsilon(1e-5));
    CHECK(r.ppv.upper == doctest::Approx(0.832512).epsilon(1e-5));
    CHECK(r.ppv_posterior_mean == doctest::Approx(7.0 / 12.0));
}

TEST_CASE("Cohen's kappa") {
    std::vector<std::pair<bool, bool>> pairs;
    for (int i = 0; i < 40; ++i) pairs.emplace_back(true, true);
    for (int i = 0; i < 5; ++i) pairs.emplace_back(true, false);
    for (int i = 0; i < 5; ++i) pairs.emplace_back(false, true);
    for (int i = 0; i < 50; ++i) pairs.emplace_back(false, false);
    const auto k = cohen_kappa(pairs);
    CHECK(k.n_double == 100);
    CHECK(k.observed == doctest::Approx(0.9));
    CHECK(k.expected == doctest::Approx(0.505));
    CHECK(k.kappa == doctest::Approx(0.797979797979798).epsilon(1e-12));
    CHECK_FALSE(k.pass);

    const std::vector<std::pair<bool, bool>> same{{true, true}, {false, false}, {true, true}};
    CHECK(cohen_kappa(same).kappa == 1.0);
    CHECK(cohen_kappa(same).pass);

    const std::vector<std::pair<bool, bool>> all_yes(6, {true, true});
    CHECK(cohen_kappa(all_yes).kappa == 1.0);
    CHECK_THROWS_AS(cohen_kappa({}), UndefinedMetric);

    // kappa is symmetric in the two raters
    Rng rng(5);
    for (int t = 0; t < 100; ++t) {
        std::vector<std::pair<bool, bool>> a, b;
        for (int i = 0; i < 30; ++i) {
            const bool x = rng.bernoulli(0.5), y = rng.bernoulli(0.5);
            a.emplace_back(x, y);
            b.emplace_back(y, x);
        }
        CHECK(cohen_kappa(a).kappa == doctest::Approx(cohen_kappa(b).kappa));
    }
}

TEST_CASE("medians and timing") {
    CHECK(lower_median({3, 1, 2}) == 2);
    CHECK(lower_median({4, 1, 3, 2}) == 2);
    CHECK(lower_median({7}) == 7);
    CHECK_THROWS_AS(lower_median({}), UndefinedMetric);

    const std::vector<TimedReview> reviews{
        {"a", 4, true}, {"a", 8, false}, {"b", 6, true}, {"b", 10, false}, {"c", 3, true}};
    const auto t = timing_summary(reviews);
    REQUIRE(t.with_highlights);
    CHECK(t.with_highlights->charts == 3);
    CHECK(t.with_highlights->median == 4);
    CHECK(t.with_highlights->min == 3);
    CHECK(t.with_highlights->max == 6);
    REQUIRE(t.without_highlights);
    CHECK(t.without_highlights->median == 8);
    REQUIRE(t.paired);
    CHECK(t.paired->charts == 2);
    CHECK(t.paired->median_with == 4);
    CHECK(t.paired->median_without == 8);
    CHECK(t.paired->reduction == doctest::Approx(0.5));

    CHECK_FALSE(timing_summary(std::vector<TimedReview>{{"a", 1, true}}).paired);
    CHECK_THROWS_AS(timing_summary(std::vector<TimedReview>{{"a", -1, true}}), DomainError);
}
