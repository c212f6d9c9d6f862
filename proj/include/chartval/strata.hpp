#pragma once

// Sampling frame: evidence-based strata, seeded multi-wave batch draws without replacement,
// and inverse sampling weights.

#include "chartval/date.hpp"
#include "chartval/rng.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace chartval {

using PatientId = std::string;

struct PatientEvidence {
    PatientId patient_id;
    bool claims_positive = false;
    std::optional<Date> claims_outcome_date; // present iff claims_positive
    bool ehr_positive = false;
    std::optional<Date> first_match_date;    // present iff ehr_positive
    bool death_record_suicide = false;
    std::vector<Date> healthcare_contact_dates;
};

enum class Stratum : std::uint8_t {
    Group1AssumedNegative,
    Group3AssumedPositive,
    ClaimsPosReviewable,
    ClaimsPosNonReviewable,
    ClaimsNegEhrPos,
};

inline constexpr std::size_t kStratumCount = 5;
inline constexpr std::array<Stratum, kStratumCount> kAllStrata{
    Stratum::Group1AssumedNegative, Stratum::Group3AssumedPositive, Stratum::ClaimsPosReviewable,
    Stratum::ClaimsPosNonReviewable, Stratum::ClaimsNegEhrPos};

constexpr std::size_t index_of(Stratum s) noexcept { return static_cast<std::size_t>(s); }
constexpr bool is_sampleable(Stratum s) noexcept {
    return s == Stratum::ClaimsPosReviewable || s == Stratum::ClaimsNegEhrPos;
}

std::string_view to_string(Stratum s) noexcept;
Stratum parse_stratum(std::string_view text);

using StratumCounts = std::array<std::size_t, kStratumCount>;

/// Stratum for one patient under the membership rules (Group 3 = death-record suicides that are
/// neither claims+ nor EHR+).
Stratum classify_stratum(const PatientEvidence& p, std::int32_t window_days);

/// Per-stratum draw requests for one wave.
struct WaveQuota {
    std::size_t claims_pos = 5;
    std::size_t claims_neg = 5;

    std::size_t total() const noexcept { return claims_pos + claims_neg; }
};

struct ChartDraw {
    PatientId patient_id;
    Stratum stratum = Stratum::ClaimsPosReviewable;
    DateRange review_window; // dates of notes presented to the annotator

    bool operator==(const ChartDraw&) const = default;
};

struct WavePlan {
    int wave_index = 0; // 1-based
    WaveQuota requested;
    std::vector<ChartDraw> draws;
    bool pool_exhausted = false;
};

class SamplingFrame {
public:
    /// Throws Error on duplicate ids or claims+ patients without an outcome date.
    static SamplingFrame assign(std::vector<PatientEvidence> cohort, std::int32_t window_days,
                                std::uint64_t seed);

    std::size_t cohort_size() const noexcept { return patients_.size(); }
    std::size_t population(Stratum s) const noexcept { return members_[index_of(s)].size(); }
    StratumCounts populations() const noexcept;
    std::size_t drawn(Stratum s) const noexcept { return drawn_[index_of(s)]; }
    const StratumCounts& drawn_counts() const noexcept { return drawn_; }
    std::size_t remaining(Stratum s) const noexcept { return remaining_[index_of(s)].size(); }
    std::size_t sampleable_pool() const noexcept;
    int waves_planned() const noexcept { return waves_planned_; }
    std::int32_t window_days() const noexcept { return window_days_; }
    std::uint64_t seed() const noexcept { return seed_; }

    const std::vector<PatientId>& members(Stratum s) const noexcept { return members_[index_of(s)]; }
    std::optional<Stratum> stratum_of(std::string_view id) const;
    const PatientEvidence* find(std::string_view id) const;

    /// Review window for a chart in a sampleable stratum.
    DateRange review_window(const PatientEvidence& p) const;

    /// Draws the next wave: uniform without replacement within each sampleable stratum. A
    /// stratum that cannot meet its quota has the shortfall filled from the other one; when
    /// both pools are empty the plan is empty and flagged pool_exhausted.
    WavePlan plan_wave(const WaveQuota& quota);

private:
    std::vector<PatientEvidence> patients_;
    std::unordered_map<std::string, std::size_t> index_;
    std::array<std::vector<PatientId>, kStratumCount> members_;
    std::array<std::vector<std::size_t>, kStratumCount> remaining_; // indices into patients_
    StratumCounts drawn_{};
    std::vector<Stratum> stratum_by_index_;
    std::int32_t window_days_ = 60;
    std::uint64_t seed_ = 0;
    int waves_planned_ = 0;
    Rng rng_{0};

    void draw_from(Stratum s, std::size_t count, std::vector<ChartDraw>& out);
};

/// Inverse sampling weights w_h = N_h / n_h for sampled strata; exactly 1.0 for Group 1/3.
class SamplingWeights {
public:
    SamplingWeights(const StratumCounts& population, const StratumCounts& sampled);

    /// Throws UndefinedMetric when a sampled stratum has N_h > 0 but n_h = 0.
    double of(Stratum s) const;
    std::size_t population(Stratum s) const noexcept { return population_[index_of(s)]; }
    std::size_t sampled(Stratum s) const noexcept { return sampled_[index_of(s)]; }

private:
    StratumCounts population_;
    StratumCounts sampled_;
};

SamplingWeights compute_weights(const SamplingFrame& frame);

} // namespace chartval
