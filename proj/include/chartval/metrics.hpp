#pragma once

#include "chartval/bayes.hpp"
#include "chartval/strata.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace chartval {

/// Final reference-standard labels (1 = outcome present) of the annotated charts in the two
/// sampled strata, in finalization order.
struct SampledLabels {
    std::vector<std::int32_t> claims_pos; // ClaimsPos_Reviewable
    std::vector<std::int32_t> claims_neg; // ClaimsNeg_EhrPos

    PosteriorState ppv_state() const;
    StratumCounts sampled_counts() const;

    bool operator==(const SampledLabels&) const = default;
};

struct ConfusionCell {
    double tp = 0.0, fp = 0.0, fn = 0.0, tn = 0.0;
    double total() const noexcept { return tp + fp + fn + tn; }
};

/// Confusion matrix projected to cohort scale.
struct WeightedConfusionMatrix {
    double tp = 0.0, fp = 0.0, fn = 0.0, tn = 0.0;
    std::array<ConfusionCell, kStratumCount> by_stratum{};
    PosteriorState ppv_state;

    double total() const noexcept { return tp + fp + fn + tn; }
};

/// Claims+ cells are extrapolated from PPV-hat over all claims+ patients (reviewable and not);
/// ClaimsNeg_EhrPos labels are scaled by N_h/n_h; Group 1 enters tn and Group 3 enters fn at
/// weight 1. Throws UndefinedMetric with zero reviewed claims+ charts (when claims+ patients
/// exist) or an unsampled ClaimsNeg_EhrPos pool.
WeightedConfusionMatrix build_confusion(const StratumCounts& population,
                                        const SampledLabels& labels);

double ppv(const WeightedConfusionMatrix& m);
double npv(const WeightedConfusionMatrix& m);
double sensitivity(const WeightedConfusionMatrix& m);
double specificity(const WeightedConfusionMatrix& m);

struct MetricEstimate {
    double value = 0.0;
    double lower = 0.0;
    double upper = 1.0;
};

struct BootstrapOptions {
    std::size_t replicates = 2000; // 0 disables resampling; intervals collapse to the point
    std::uint64_t seed = 20240101;
};

struct PerformanceReport {
    std::string snapshot;          // "at-stop" or "full"
    MetricEstimate ppv;            // Beta credible interval
    double ppv_posterior_mean = 0.5;
    MetricEstimate npv;            // stratified percentile bootstrap
    MetricEstimate sensitivity;
    MetricEstimate specificity;
    WeightedConfusionMatrix matrix;
    std::size_t bootstrap_replicates = 0;
    std::size_t bootstrap_skipped = 0; // replicates with an undefined metric
    double alpha = 0.05;
};

/// Throws UndefinedMetric when any of the four metrics has a zero denominator.
PerformanceReport performance_report(const StratumCounts& population, const SampledLabels& labels,
                                     double alpha, const BootstrapOptions& boot,
                                     std::string snapshot);

struct AgreementReport {
    std::size_t n_double = 0;
    double observed = 0.0; // p_o
    double expected = 0.0; // p_e
    double kappa = 0.0;
    bool pass = false;     // kappa > threshold
};

/// Cohen's kappa over binary (labelA, labelB) pairs. p_e = 1 with p_o = 1 gives kappa = 1;
/// p_e = 1 with disagreement throws UndefinedMetric, as does empty input.
AgreementReport cohen_kappa(std::span<const std::pair<bool, bool>> pairs, double threshold = 0.8);

struct TimedReview {
    PatientId patient_id;
    double minutes = 0.0;
    bool highlights_enabled = true;
};

struct ConditionTiming {
    std::size_t charts = 0;
    double median = 0.0; // lower of the two middle values for even counts
    double min = 0.0;
    double max = 0.0;
};

struct PairedTiming {
    std::size_t charts = 0; // charts reviewed under both conditions
    double median_with = 0.0;
    double median_without = 0.0;
    double reduction = 0.0; // 1 - with/without
};

struct TimingSummary {
    std::optional<ConditionTiming> with_highlights;
    std::optional<ConditionTiming> without_highlights;
    std::optional<PairedTiming> paired;
};

double lower_median(std::vector<double> values);
TimingSummary timing_summary(std::span<const TimedReview> reviews);

} // namespace chartval
