#include "chartval/metrics.hpp"

#include "chartval/error.hpp"
#include "chartval/kernels.hpp"
#include "chartval/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace chartval {

namespace {

std::uint64_t count_positive(const std::vector<std::int32_t>& labels) {
    return static_cast<std::uint64_t>(std::count(labels.begin(), labels.end(), 1));
}

double ratio(double num, double den, std::string_view metric) {
    if (!(den > 0.0)) throw UndefinedMetric(std::string(metric) + " undefined: zero denominator");
    return num / den;
}

// Core projection from per-stratum positive counts; shared by the point estimate and the
// bootstrap replicates.
WeightedConfusionMatrix project(const StratumCounts& population, std::uint64_t pos_claims_pos,
                                std::size_t n_claims_pos, std::uint64_t pos_claims_neg,
                                std::size_t n_claims_neg) {
    WeightedConfusionMatrix m;
    m.ppv_state = {pos_claims_pos, n_claims_pos};

    const std::size_t n_reviewable = population[index_of(Stratum::ClaimsPosReviewable)];
    const std::size_t n_nonreviewable = population[index_of(Stratum::ClaimsPosNonReviewable)];
    const double all_claims_pos = static_cast<double>(n_reviewable + n_nonreviewable);
    if (all_claims_pos > 0.0) {
        if (n_claims_pos == 0) throw UndefinedMetric("PPV undefined: no reviewed claims+ charts");
        // Multiply before dividing so full review (N == k) reproduces the raw counts exactly.
        const double s = static_cast<double>(pos_claims_pos);
        const double k = static_cast<double>(n_claims_pos);
        const double tp = s * all_claims_pos / k;
        const double fp = (k - s) * all_claims_pos / k;
        auto& rev = m.by_stratum[index_of(Stratum::ClaimsPosReviewable)];
        auto& nonrev = m.by_stratum[index_of(Stratum::ClaimsPosNonReviewable)];
        const double share = static_cast<double>(n_reviewable) / all_claims_pos;
        rev.tp = tp * share;
        rev.fp = fp * share;
        nonrev.tp = tp - rev.tp;
        nonrev.fp = fp - rev.fp;
        m.tp += tp;
        m.fp += fp;
    }

    const SamplingWeights weights(population, {0, 0, n_claims_pos, 0, n_claims_neg});
    const double w = weights.of(Stratum::ClaimsNegEhrPos);
    auto& neg = m.by_stratum[index_of(Stratum::ClaimsNegEhrPos)];
    neg.fn = w * static_cast<double>(pos_claims_neg);
    neg.tn = w * static_cast<double>(n_claims_neg - pos_claims_neg);
    m.fn += neg.fn;
    m.tn += neg.tn;

    auto& g1 = m.by_stratum[index_of(Stratum::Group1AssumedNegative)];
    g1.tn = static_cast<double>(population[index_of(Stratum::Group1AssumedNegative)]);
    auto& g3 = m.by_stratum[index_of(Stratum::Group3AssumedPositive)];
    g3.fn = static_cast<double>(population[index_of(Stratum::Group3AssumedPositive)]);
    m.tn += g1.tn;
    m.fn += g3.fn;
    return m;
}

struct Quad {
    double npv, sens, spec;
};

std::optional<Quad> try_metrics(const WeightedConfusionMatrix& m) {
    if (!(m.tn + m.fn > 0.0) || !(m.tp + m.fn > 0.0) || !(m.tn + m.fp > 0.0)) return std::nullopt;
    return Quad{m.tn / (m.tn + m.fn), m.tp / (m.tp + m.fn), m.tn / (m.tn + m.fp)};
}

// Type-7 (linear interpolation) sample quantile of sorted data.
double sample_quantile(const std::vector<double>& sorted, double q) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

MetricEstimate percentile_interval(double point, std::vector<double> draws, double alpha) {
    if (draws.empty()) return {point, point, point};
    std::sort(draws.begin(), draws.end());
    MetricEstimate e{point, sample_quantile(draws, alpha / 2.0),
                     sample_quantile(draws, 1.0 - alpha / 2.0)};
    e.lower = std::min(e.lower, point);
    e.upper = std::max(e.upper, point);
    return e;
}

std::uint64_t resample_positives(const std::vector<std::int32_t>& labels, Rng& rng,
                                 std::vector<std::uint32_t>& scratch) {
    scratch.resize(labels.size());
    for (auto& idx : scratch) idx = static_cast<std::uint32_t>(rng.below(labels.size()));
    return static_cast<std::uint64_t>(kernels::sum_gathered(labels, scratch));
}

} // namespace

PosteriorState SampledLabels::ppv_state() const {
    return {count_positive(claims_pos), claims_pos.size()};
}

StratumCounts SampledLabels::sampled_counts() const {
    StratumCounts n{};
    n[index_of(Stratum::ClaimsPosReviewable)] = claims_pos.size();
    n[index_of(Stratum::ClaimsNegEhrPos)] = claims_neg.size();
    return n;
}

WeightedConfusionMatrix build_confusion(const StratumCounts& population,
                                        const SampledLabels& labels) {
    return project(population, count_positive(labels.claims_pos), labels.claims_pos.size(),
                   count_positive(labels.claims_neg), labels.claims_neg.size());
}

double ppv(const WeightedConfusionMatrix& m) { return ratio(m.tp, m.tp + m.fp, "PPV"); }
double npv(const WeightedConfusionMatrix& m) { return ratio(m.tn, m.tn + m.fn, "NPV"); }
double sensitivity(const WeightedConfusionMatrix& m) {
    return ratio(m.tp, m.tp + m.fn, "sensitivity");
}
double specificity(const WeightedConfusionMatrix& m) {
    return ratio(m.tn, m.tn + m.fp, "specificity");
}

PerformanceReport performance_report(const StratumCounts& population, const SampledLabels& labels,
                                     double alpha, const BootstrapOptions& boot,
                                     std::string snapshot) {
    PerformanceReport r;
    r.snapshot = std::move(snapshot);
    r.alpha = alpha;
    r.matrix = build_confusion(population, labels);

    const PosteriorState state = labels.ppv_state();
    const CredibleInterval ci = credible_interval(state, alpha);
    r.ppv = {point_estimate(state), ci.lower, ci.upper};
    r.ppv_posterior_mean = posterior_mean(state);
    const double point_npv = npv(r.matrix);
    const double point_sens = sensitivity(r.matrix);
    const double point_spec = specificity(r.matrix);

    std::vector<double> d_npv, d_sens, d_spec;
    d_npv.reserve(boot.replicates);
    d_sens.reserve(boot.replicates);
    d_spec.reserve(boot.replicates);
    std::vector<std::uint32_t> scratch;
    for (std::size_t i = 0; i < boot.replicates; ++i) {
        Rng rng(derive_seed(boot.seed, i));
        const std::uint64_t pos = labels.claims_pos.empty()
                                      ? 0 : resample_positives(labels.claims_pos, rng, scratch);
        const std::uint64_t neg = labels.claims_neg.empty()
                                      ? 0 : resample_positives(labels.claims_neg, rng, scratch);
        const auto q = try_metrics(project(population, pos, labels.claims_pos.size(), neg,
                                           labels.claims_neg.size()));
        if (!q) {
            ++r.bootstrap_skipped;
            continue;
        }
        d_npv.push_back(q->npv);
        d_sens.push_back(q->sens);
        d_spec.push_back(q->spec);
    }
    r.bootstrap_replicates = boot.replicates;
    r.npv = percentile_interval(point_npv, std::move(d_npv), alpha);
    r.sensitivity = percentile_interval(point_sens, std::move(d_sens), alpha);
    r.specificity = percentile_interval(point_spec, std::move(d_spec), alpha);
    return r;
}

AgreementReport cohen_kappa(std::span<const std::pair<bool, bool>> pairs, double threshold) {
    if (pairs.empty()) throw UndefinedMetric("kappa undefined: no double-annotated charts");
    std::size_t agree = 0, a_pos = 0, b_pos = 0;
    for (const auto& [a, b] : pairs) {
        agree += (a == b) ? 1 : 0;
        a_pos += a ? 1 : 0;
        b_pos += b ? 1 : 0;
    }
    const double n = static_cast<double>(pairs.size());
    AgreementReport r;
    r.n_double = pairs.size();
    r.observed = static_cast<double>(agree) / n;
    const double pa = static_cast<double>(a_pos) / n;
    const double pb = static_cast<double>(b_pos) / n;
    r.expected = pa * pb + (1.0 - pa) * (1.0 - pb);
    if (r.expected >= 1.0) {
        if (agree != pairs.size()) throw UndefinedMetric("kappa undefined: p_e = 1 with disagreement");
        r.kappa = 1.0;
    } else {
        r.kappa = (r.observed - r.expected) / (1.0 - r.expected);
    }
    r.pass = r.kappa > threshold;
    return r;
}

double lower_median(std::vector<double> values) {
    if (values.empty()) throw UndefinedMetric("median of empty set");
    const std::size_t mid = (values.size() - 1) / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    return values[mid];
}

TimingSummary timing_summary(std::span<const TimedReview> reviews) {
    std::vector<double> with, without;
    std::map<PatientId, std::pair<std::vector<double>, std::vector<double>>> by_chart;
    for (const TimedReview& r : reviews) {
        if (r.minutes < 0.0) throw DomainError("negative review duration for " + r.patient_id);
        (r.highlights_enabled ? with : without).push_back(r.minutes);
        auto& slot = by_chart[r.patient_id];
        (r.highlights_enabled ? slot.first : slot.second).push_back(r.minutes);
    }
    const auto summarize = [](const std::vector<double>& v) -> std::optional<ConditionTiming> {
        if (v.empty()) return std::nullopt;
        const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
        return ConditionTiming{v.size(), lower_median(v), *mn, *mx};
    };
    TimingSummary t{summarize(with), summarize(without), std::nullopt};

    std::vector<double> paired_with, paired_without;
    std::size_t charts = 0;
    for (const auto& [id, slot] : by_chart) {
        if (slot.first.empty() || slot.second.empty()) continue;
        ++charts;
        paired_with.insert(paired_with.end(), slot.first.begin(), slot.first.end());
        paired_without.insert(paired_without.end(), slot.second.begin(), slot.second.end());
    }
    if (charts > 0) {
        PairedTiming p;
        p.charts = charts;
        p.median_with = lower_median(paired_with);
        p.median_without = lower_median(paired_without);
        p.reduction = p.median_without > 0.0 ? 1.0 - p.median_with / p.median_without : 0.0;
        t.paired = p;
    }
    return t;
}

} // namespace chartval
