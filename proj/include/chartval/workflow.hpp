#pragma once

// The validation session: stratified waves, double-annotation training with a kappa gate,
// annotation intake with adjudication, posterior updates and stopping. Every mutation is a
// log record; replaying the log against the same cohort and config rebuilds the session.

#include "chartval/bayes.hpp"
#include "chartval/date.hpp"
#include "chartval/highlighter.hpp"
#include "chartval/metrics.hpp"
#include "chartval/strata.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace chartval {

/// One cohort-file record, before EHR evidence is derived from notes.
struct PatientRecord {
    PatientId patient_id;
    bool claims_positive = false;
    std::optional<Date> claims_outcome_date;
    bool death_record_suicide = false;
    std::vector<Date> healthcare_contact_dates;
    std::optional<DateRange> followup; // unbounded when absent

    bool operator==(const PatientRecord&) const = default;
};

/// Attaches EHR status (classify_patient over each patient's notes) to the cohort records.
std::vector<PatientEvidence> derive_evidence(std::span<const PatientRecord> cohort,
                                             std::span<const ClinicalNote> notes,
                                             const TermDictionary& dict, bool count_negated);

struct SessionConfig {
    std::size_t batch_size = 10;
    std::size_t claims_pos_quota = 5;
    std::size_t claims_neg_quota = 5;
    double threshold = 0.75;
    double alpha = 0.05;
    double kappa_threshold = 0.8;
    std::size_t training_batch = 30; // 0 skips double annotation
    std::int32_t window_days = 60;
    std::uint64_t seed = 20240101;
    bool count_negated_mentions = false;
    bool continue_after_stop = false;
    std::size_t bootstrap_replicates = 2000;
    std::vector<std::string> annotators{"annotator1", "annotator2"};

    StoppingRule stopping_rule() const { return {threshold, alpha}; }
    WaveQuota quota() const { return {claims_pos_quota, claims_neg_quota}; }
    /// Throws Error on an inconsistent configuration.
    void validate() const;

    bool operator==(const SessionConfig&) const = default;
};

enum class Phase { Training, DoubleAnnotation, Independent, Stopped };
enum class Label { Positive, Negative, Unsure, Unannotatable };

std::string_view to_string(Phase p) noexcept;
std::string_view to_string(Label l) noexcept;
Phase parse_phase(std::string_view text);
Label parse_label(std::string_view text);

struct Assignment {
    PatientId patient_id;
    std::string annotator_id;
    int wave_index = 0;
    bool highlights_enabled = true;

    bool operator==(const Assignment&) const = default;
};

struct WaveRecord {
    std::uint64_t seq = 0;
    int wave_index = 0;
    Phase phase = Phase::Independent;
    bool pool_exhausted = false;
    std::vector<ChartDraw> draws;
    std::vector<Assignment> assignments;
    Timestamp issued_at{};

    bool operator==(const WaveRecord&) const = default;
};

struct AnnotationRecord {
    std::uint64_t seq = 0;
    int wave_index = 0;
    PatientId patient_id;
    std::string annotator_id;
    Label label = Label::Negative;
    std::string reason_code;
    Timestamp started_at{};   // client-reported: chart opened
    Timestamp submitted_at{}; // client-reported: label submitted
    std::optional<Timestamp> received_at; // server-assigned
    bool highlights_enabled = true;

    double duration_minutes() const;
    bool operator==(const AnnotationRecord&) const = default;
};

struct AdjudicationRecord {
    std::uint64_t seq = 0;
    std::uint64_t supersedes_seq = 0;
    Label label = Label::Negative;
    std::string adjudicator_id;
    std::string reason_code;
    std::optional<Timestamp> received_at;

    bool operator==(const AdjudicationRecord&) const = default;
};

struct AdvanceRecord {
    std::uint64_t seq = 0;
    int wave_index = 0;
    Phase phase_before = Phase::Independent;
    Phase phase_after = Phase::Independent;
    bool stop_evaluated = false;
    Verdict verdict = Verdict::Continue;
    std::optional<double> kappa;
    PosteriorState posterior;

    bool operator==(const AdvanceRecord&) const = default;
};

using LogRecord = std::variant<WaveRecord, AnnotationRecord, AdjudicationRecord, AdvanceRecord>;

std::uint64_t seq_of(const LogRecord& r) noexcept;

struct StopRecord {
    Verdict verdict = Verdict::Continue; // Continue when stopped by pool exhaustion
    bool pool_exhausted = false;
    int wave_index = 0;
    std::size_t charts_reviewed = 0;
    PosteriorState posterior;
    SampledLabels labels; // weight snapshot: n_h = labels.sampled_counts()

    bool operator==(const StopRecord&) const = default;
};

struct TrajectoryPoint {
    int wave_index = 0;
    Phase phase = Phase::Independent; // phase the wave was issued in
    PosteriorState posterior;
    std::optional<double> point_estimate;
    double lower = 0.0;
    double upper = 1.0;
    bool stop_evaluated = false;
    Verdict verdict = Verdict::Continue;
    std::size_t charts_reviewed = 0;

    bool operator==(const TrajectoryPoint&) const = default;
};

struct SavingsReport {
    std::size_t pool_total = 0;
    std::size_t reviewed = 0;
    bool stopped_by_rule = false;
    std::optional<int> stop_wave;
    double savings = 0.0; // 1 - reviewed/pool_total when stopped by rule, else 0
};

struct ChartStatus {
    PatientId patient_id;
    Stratum stratum = Stratum::ClaimsPosReviewable;
    int wave_index = 0;
    std::vector<std::string> expected_annotators;
    std::map<std::string, std::uint64_t> submissions; // annotator -> annotation seq
    std::optional<Label> final_label;
    bool needs_adjudication = false;

    bool is_double() const noexcept { return expected_annotators.size() > 1; }
    bool operator==(const ChartStatus&) const = default;
};

/// Field-by-field comparable view of the session, used to check replay against live state.
struct SessionState {
    Phase phase = Phase::Training;
    PosteriorState posterior;
    SampledLabels labels;
    StratumCounts unannotatable{};
    StratumCounts drawn{};
    std::vector<std::pair<bool, bool>> double_pairs;
    std::optional<StopRecord> stop;
    std::vector<TrajectoryPoint> trajectory;
    std::map<PatientId, ChartStatus> charts;
    std::uint64_t next_seq = 1;
    int current_wave = 0;
    bool current_wave_advanced = true;

    bool operator==(const SessionState&) const = default;
};

class ValidationSession {
public:
    /// Invoked with each record before it takes effect; an exception aborts the operation and
    /// leaves the session unusable (reopen it from the log).
    using Sink = std::function<void(const LogRecord&)>;

    ValidationSession(std::vector<PatientEvidence> cohort, SessionConfig config);

    void set_sink(Sink sink) { sink_ = std::move(sink); }

    /// Issues the next wave. Throws SessionStopped when stopped, WaveIncomplete while the
    /// current wave has not been advanced. An empty pool yields a pool_exhausted record and
    /// stops the session.
    WaveRecord next_batch(Timestamp now);

    /// seq and (when zero) wave_index are assigned here; received_at is set to `received`.
    AnnotationRecord submit_annotation(AnnotationRecord record, Timestamp received);
    AdjudicationRecord submit_adjudication(AdjudicationRecord record, Timestamp received);

    /// Closes the current wave: kappa gate in double-annotation phases, stopping rule in the
    /// Independent phase.
    AdvanceRecord advance_wave();

    static ValidationSession replay(std::vector<PatientEvidence> cohort, SessionConfig config,
                                    std::span<const LogRecord> log);

    const SessionConfig& config() const noexcept { return config_; }
    const SamplingFrame& frame() const noexcept { return frame_; }
    Phase phase() const noexcept { return phase_; }
    PosteriorState posterior() const noexcept { return posterior_; }
    const SampledLabels& labels() const noexcept { return labels_; }
    const std::optional<StopRecord>& stop() const noexcept { return stop_; }
    const std::vector<TrajectoryPoint>& trajectory() const noexcept { return trajectory_; }
    const std::vector<LogRecord>& log() const noexcept { return log_; }
    const std::vector<std::pair<bool, bool>>& double_pairs() const noexcept { return double_pairs_; }
    int current_wave() const noexcept { return current_wave_; }
    bool current_wave_open() const noexcept { return current_wave_ > 0 && !current_advanced_; }
    std::uint64_t next_seq() const noexcept { return next_seq_; }
    const ChartStatus* chart(std::string_view patient_id) const;

    std::vector<Assignment> open_assignments(std::string_view annotator_id) const;
    /// Annotation seqs of charts waiting on adjudication.
    std::vector<std::uint64_t> pending_adjudications() const;
    std::optional<AgreementReport> agreement() const;
    SavingsReport savings() const;
    std::vector<TimedReview> timed_reviews() const;
    SessionState state() const;

private:
    SessionConfig config_;
    SamplingFrame frame_;
    Sink sink_;
    bool broken_ = false;

    Phase phase_ = Phase::Training;
    PosteriorState posterior_;
    SampledLabels labels_;
    StratumCounts unannotatable_{};
    std::vector<std::pair<bool, bool>> double_pairs_;
    std::size_t double_charts_issued_ = 0;
    std::size_t single_assign_counter_ = 0;
    std::optional<StopRecord> stop_;
    std::vector<TrajectoryPoint> trajectory_;
    std::map<PatientId, ChartStatus> charts_;
    std::vector<PatientId> current_charts_;
    int current_wave_ = 0;
    Phase current_wave_phase_ = Phase::Training;
    bool current_advanced_ = true;
    std::size_t charts_drawn_ = 0;

    std::vector<LogRecord> log_;
    std::uint64_t next_seq_ = 1;

    void ensure_usable() const;
    void commit(LogRecord record);
    const AnnotationRecord* annotation_at(std::uint64_t seq) const;
    void finalize(ChartStatus& chart, Label label);
    WaveQuota quota_for_phase() const;
    AdvanceRecord compute_advance() const;
};

} // namespace chartval
