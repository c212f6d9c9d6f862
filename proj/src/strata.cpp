#include "chartval/strata.hpp"

#include "chartval/error.hpp"

#include <algorithm>
#include <cstdlib>

namespace chartval {

std::string_view to_string(Stratum s) noexcept {
    switch (s) {
    case Stratum::Group1AssumedNegative: return "Group1_AssumedNegative";
    case Stratum::Group3AssumedPositive: return "Group3_AssumedPositive";
    case Stratum::ClaimsPosReviewable: return "ClaimsPos_Reviewable";
    case Stratum::ClaimsPosNonReviewable: return "ClaimsPos_NonReviewable";
    case Stratum::ClaimsNegEhrPos: return "ClaimsNeg_EhrPos";
    }
    return "?";
}

Stratum parse_stratum(std::string_view text) {
    for (const Stratum s : kAllStrata) {
        if (to_string(s) == text) return s;
    }
    throw ParseError("unknown stratum '" + std::string(text) + "'");
}

Stratum classify_stratum(const PatientEvidence& p, std::int32_t window_days) {
    if (p.claims_positive) {
        if (!p.claims_outcome_date) {
            throw Error("patient " + p.patient_id + " is claims+ without an outcome date");
        }
        const DateRange window = DateRange::around(*p.claims_outcome_date, window_days);
        const bool contact = std::any_of(p.healthcare_contact_dates.begin(),
                                         p.healthcare_contact_dates.end(),
                                         [&](Date d) { return window.contains(d); });
        return contact ? Stratum::ClaimsPosReviewable : Stratum::ClaimsPosNonReviewable;
    }
    if (p.ehr_positive) return Stratum::ClaimsNegEhrPos;
    return p.death_record_suicide ? Stratum::Group3AssumedPositive : Stratum::Group1AssumedNegative;
}

SamplingFrame SamplingFrame::assign(std::vector<PatientEvidence> cohort, std::int32_t window_days,
                                    std::uint64_t seed) {
    if (window_days < 0) throw DomainError("window_days must be nonnegative");
    SamplingFrame f;
    f.window_days_ = window_days;
    f.seed_ = seed;
    f.rng_ = Rng(seed);
    f.patients_ = std::move(cohort);
    f.index_.reserve(f.patients_.size());
    f.stratum_by_index_.reserve(f.patients_.size());
    for (std::size_t i = 0; i < f.patients_.size(); ++i) {
        const PatientEvidence& p = f.patients_[i];
        if (!f.index_.emplace(p.patient_id, i).second) {
            throw Error("duplicate patient id " + p.patient_id);
        }
        if (p.ehr_positive != p.first_match_date.has_value()) {
            throw Error("patient " + p.patient_id + ": first_match_date must accompany EHR+");
        }
        const Stratum s = classify_stratum(p, window_days);
        f.stratum_by_index_.push_back(s);
        f.members_[index_of(s)].push_back(p.patient_id);
        f.remaining_[index_of(s)].push_back(i);
    }
    return f;
}

StratumCounts SamplingFrame::populations() const noexcept {
    StratumCounts n{};
    for (const Stratum s : kAllStrata) n[index_of(s)] = population(s);
    return n;
}

std::size_t SamplingFrame::sampleable_pool() const noexcept {
    return population(Stratum::ClaimsPosReviewable) + population(Stratum::ClaimsNegEhrPos);
}

std::optional<Stratum> SamplingFrame::stratum_of(std::string_view id) const {
    const auto it = index_.find(std::string(id));
    if (it == index_.end()) return std::nullopt;
    return stratum_by_index_[it->second];
}

const PatientEvidence* SamplingFrame::find(std::string_view id) const {
    const auto it = index_.find(std::string(id));
    return it == index_.end() ? nullptr : &patients_[it->second];
}

DateRange SamplingFrame::review_window(const PatientEvidence& p) const {
    if (p.claims_positive) return DateRange::around(*p.claims_outcome_date, window_days_);
    if (p.first_match_date) return DateRange::around(*p.first_match_date, window_days_);
    throw Error("patient " + p.patient_id + " is not in a sampleable stratum");
}

// Draw order: pick j uniformly in [0, remaining), take remaining[j], move the last element
// into slot j. The sequence of picks is a function of the seed alone.
void SamplingFrame::draw_from(Stratum s, std::size_t count, std::vector<ChartDraw>& out) {
    auto& pool = remaining_[index_of(s)];
    for (std::size_t i = 0; i < count && !pool.empty(); ++i) {
        const std::size_t j = static_cast<std::size_t>(rng_.below(pool.size()));
        const std::size_t patient = pool[j];
        pool[j] = pool.back();
        pool.pop_back();
        ++drawn_[index_of(s)];
        out.push_back({patients_[patient].patient_id, s, review_window(patients_[patient])});
    }
}

WavePlan SamplingFrame::plan_wave(const WaveQuota& quota) {
    WavePlan plan;
    plan.requested = quota;
    const std::size_t pos_left = remaining(Stratum::ClaimsPosReviewable);
    const std::size_t neg_left = remaining(Stratum::ClaimsNegEhrPos);
    if (pos_left == 0 && neg_left == 0) {
        plan.pool_exhausted = true;
        return plan;
    }
    std::size_t take_pos = std::min(quota.claims_pos, pos_left);
    std::size_t take_neg = std::min(quota.claims_neg, neg_left);
    const std::size_t short_pos = quota.claims_pos - take_pos;
    const std::size_t short_neg = quota.claims_neg - take_neg;
    take_pos += std::min(pos_left - take_pos, short_neg);
    take_neg += std::min(neg_left - take_neg, short_pos);

    plan.wave_index = ++waves_planned_;
    plan.draws.reserve(take_pos + take_neg);
    draw_from(Stratum::ClaimsPosReviewable, take_pos, plan.draws);
    draw_from(Stratum::ClaimsNegEhrPos, take_neg, plan.draws);
    return plan;
}

SamplingWeights::SamplingWeights(const StratumCounts& population, const StratumCounts& sampled)
    : population_(population), sampled_(sampled) {
    for (const Stratum s : kAllStrata) {
        if (sampled_[index_of(s)] > population_[index_of(s)]) {
            throw DomainError("sampled count exceeds population for " + std::string(to_string(s)));
        }
    }
}

double SamplingWeights::of(Stratum s) const {
    if (!is_sampleable(s)) return 1.0;
    const std::size_t n = sampled_[index_of(s)];
    const std::size_t big_n = population_[index_of(s)];
    if (big_n == 0) return 1.0;
    if (n == 0) {
        throw UndefinedMetric("sampling weight undefined: no sampled charts in " +
                              std::string(to_string(s)));
    }
    return static_cast<double>(big_n) / static_cast<double>(n);
}

SamplingWeights compute_weights(const SamplingFrame& frame) {
    return SamplingWeights(frame.populations(), frame.drawn_counts());
}

} // namespace chartval
