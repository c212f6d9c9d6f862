#include "chartval/workflow.hpp"

#include "chartval/error.hpp"

#include <algorithm>
#include <unordered_map>

namespace chartval {

std::vector<PatientEvidence> derive_evidence(std::span<const PatientRecord> cohort,
                                             std::span<const ClinicalNote> notes,
                                             const TermDictionary& dict, bool count_negated) {
    std::unordered_map<std::string_view, std::vector<ClinicalNote>> by_patient;
    for (const ClinicalNote& n : notes) by_patient[n.patient_id].push_back(n);

    std::vector<PatientEvidence> out;
    out.reserve(cohort.size());
    for (const PatientRecord& r : cohort) {
        PatientEvidence e;
        e.patient_id = r.patient_id;
        e.claims_positive = r.claims_positive;
        e.claims_outcome_date = r.claims_outcome_date;
        e.death_record_suicide = r.death_record_suicide;
        e.healthcare_contact_dates = r.healthcare_contact_dates;
        if (const auto it = by_patient.find(r.patient_id); it != by_patient.end()) {
            const EhrStatus st = classify_patient(it->second, dict, r.followup, count_negated);
            e.ehr_positive = st.positive;
            e.first_match_date = st.first_match_date;
        }
        out.push_back(std::move(e));
    }
    return out;
}

void SessionConfig::validate() const {
    if (batch_size == 0) throw Error("batch_size must be >= 1");
    if (claims_pos_quota + claims_neg_quota != batch_size) {
        throw Error("claims_pos_quota + claims_neg_quota must equal batch_size");
    }
    if (!(threshold > 0.0 && threshold < 1.0)) throw Error("threshold must lie in (0,1)");
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error("alpha must lie in (0,1)");
    if (!(kappa_threshold >= -1.0 && kappa_threshold <= 1.0)) {
        throw Error("kappa_threshold must lie in [-1,1]");
    }
    if (window_days < 0) throw Error("window_days must be >= 0");
    if (annotators.empty()) throw Error("at least one annotator is required");
    if (training_batch > 0 && annotators.size() < 2) {
        throw Error("double annotation needs two annotators");
    }
}

std::string_view to_string(Phase p) noexcept {
    switch (p) {
    case Phase::Training: return "Training";
    case Phase::DoubleAnnotation: return "DoubleAnnotation";
    case Phase::Independent: return "Independent";
    case Phase::Stopped: return "Stopped";
    }
    return "?";
}

std::string_view to_string(Label l) noexcept {
    switch (l) {
    case Label::Positive: return "positive";
    case Label::Negative: return "negative";
    case Label::Unsure: return "unsure";
    case Label::Unannotatable: return "unannotatable";
    }
    return "?";
}

Phase parse_phase(std::string_view text) {
    for (const Phase p : {Phase::Training, Phase::DoubleAnnotation, Phase::Independent, Phase::Stopped}) {
        if (to_string(p) == text) return p;
    }
    throw ParseError("unknown phase '" + std::string(text) + "'");
}

Label parse_label(std::string_view text) {
    for (const Label l : {Label::Positive, Label::Negative, Label::Unsure, Label::Unannotatable}) {
        if (to_string(l) == text) return l;
    }
    throw ParseError("unknown label '" + std::string(text) + "'");
}

double AnnotationRecord::duration_minutes() const {
    return std::chrono::duration<double, std::ratio<60>>(submitted_at - started_at).count();
}

std::uint64_t seq_of(const LogRecord& r) noexcept {
    return std::visit([](const auto& rec) { return rec.seq; }, r);
}

namespace {

bool is_binary(Label l) { return l == Label::Positive || l == Label::Negative; }

[[noreturn]] void fail(WorkflowErrc code, const std::string& what) { throw WorkflowError(code, what); }

} // namespace

ValidationSession::ValidationSession(std::vector<PatientEvidence> cohort, SessionConfig config)
    : config_(std::move(config)) {
    config_.validate();
    frame_ = SamplingFrame::assign(std::move(cohort), config_.window_days, config_.seed);
    phase_ = config_.training_batch > 0 ? Phase::Training : Phase::Independent;
    if (frame_.sampleable_pool() == 0) {
        phase_ = Phase::Stopped;
        stop_ = StopRecord{Verdict::Continue, true, 0, 0, {}, {}};
    }
}

void ValidationSession::ensure_usable() const {
    if (broken_) throw Error("session log write failed; reopen the session from its log");
}

void ValidationSession::commit(LogRecord record) {
    if (sink_) {
        try {
            sink_(record);
        } catch (...) {
            broken_ = true;
            throw;
        }
    }
    log_.push_back(std::move(record));
    ++next_seq_;
}

const AnnotationRecord* ValidationSession::annotation_at(std::uint64_t seq) const {
    if (seq == 0 || seq > log_.size()) return nullptr;
    return std::get_if<AnnotationRecord>(&log_[seq - 1]);
}

const ChartStatus* ValidationSession::chart(std::string_view patient_id) const {
    const auto it = charts_.find(std::string(patient_id));
    return it == charts_.end() ? nullptr : &it->second;
}

WaveQuota ValidationSession::quota_for_phase() const {
    if (phase_ != Phase::Training) return config_.quota();
    const std::size_t n = std::min(config_.batch_size, config_.training_batch - double_charts_issued_);
    const std::size_t pos = (n * config_.claims_pos_quota + config_.batch_size / 2) / config_.batch_size;
    return {pos, n - pos};
}

WaveRecord ValidationSession::next_batch(Timestamp now) {
    ensure_usable();
    if (phase_ == Phase::Stopped) fail(WorkflowErrc::SessionStopped, "session is stopped");
    if (!current_advanced_) {
        fail(WorkflowErrc::WaveIncomplete,
             "wave " + std::to_string(current_wave_) + " has not been advanced");
    }

    const WavePlan plan = frame_.plan_wave(quota_for_phase());
    WaveRecord rec;
    rec.seq = next_seq_;
    rec.issued_at = now;
    rec.phase = phase_;
    rec.pool_exhausted = plan.pool_exhausted;
    rec.wave_index = plan.wave_index;
    rec.draws = plan.draws;
    const bool dbl = phase_ == Phase::Training || phase_ == Phase::DoubleAnnotation;
    for (const ChartDraw& d : plan.draws) {
        if (dbl) {
            for (std::size_t a = 0; a < 2; ++a) {
                rec.assignments.push_back({d.patient_id, config_.annotators[a], plan.wave_index, true});
            }
        } else {
            const auto& who = config_.annotators[(single_assign_counter_ + rec.assignments.size()) %
                                                 config_.annotators.size()];
            rec.assignments.push_back({d.patient_id, who, plan.wave_index, true});
        }
    }
    commit(rec);
    const auto& stored = std::get<WaveRecord>(log_.back());

    if (stored.pool_exhausted) {
        phase_ = Phase::Stopped;
        if (!stop_) stop_ = StopRecord{Verdict::Continue, true, current_wave_, charts_drawn_,
                                       posterior_, labels_};
        return stored;
    }

    current_wave_ = stored.wave_index;
    current_wave_phase_ = stored.phase;
    current_advanced_ = false;
    current_charts_.clear();
    charts_drawn_ += stored.draws.size();
    if (dbl) double_charts_issued_ += stored.draws.size();
    else single_assign_counter_ += stored.assignments.size();
    for (const ChartDraw& d : stored.draws) {
        ChartStatus cs;
        cs.patient_id = d.patient_id;
        cs.stratum = d.stratum;
        cs.wave_index = stored.wave_index;
        current_charts_.push_back(d.patient_id);
        charts_.emplace(d.patient_id, std::move(cs));
    }
    for (const Assignment& a : stored.assignments) {
        charts_[a.patient_id].expected_annotators.push_back(a.annotator_id);
    }
    return stored;
}

void ValidationSession::finalize(ChartStatus& chart, Label label) {
    chart.final_label = label;
    chart.needs_adjudication = false;
    if (label == Label::Unannotatable) {
        ++unannotatable_[index_of(chart.stratum)];
        return;
    }
    const std::int32_t y = label == Label::Positive ? 1 : 0;
    if (chart.stratum == Stratum::ClaimsPosReviewable) {
        posterior_ = posterior_update(posterior_, y == 1);
        labels_.claims_pos.push_back(y);
    } else if (chart.stratum == Stratum::ClaimsNegEhrPos) {
        labels_.claims_neg.push_back(y);
    }
}

AnnotationRecord ValidationSession::submit_annotation(AnnotationRecord record,
                                                             Timestamp received) {
    ensure_usable();
    if (phase_ == Phase::Stopped) fail(WorkflowErrc::SessionStopped, "session is stopped");
    const auto it = charts_.find(record.patient_id);
    if (it == charts_.end() || it->second.wave_index != current_wave_ || current_advanced_) {
        fail(WorkflowErrc::UnknownAssignment, "no open assignment for patient " + record.patient_id);
    }
    ChartStatus& chart = it->second;
    if (record.wave_index == 0) record.wave_index = chart.wave_index;
    if (record.wave_index != chart.wave_index) {
        fail(WorkflowErrc::UnknownAssignment, "patient " + record.patient_id + " is not in wave " +
                                                  std::to_string(record.wave_index));
    }
    const auto& expected = chart.expected_annotators;
    if (std::find(expected.begin(), expected.end(), record.annotator_id) == expected.end()) {
        fail(WorkflowErrc::UnknownAssignment, "patient " + record.patient_id +
                                                  " is not assigned to " + record.annotator_id);
    }
    if (chart.submissions.count(record.annotator_id)) {
        fail(WorkflowErrc::DuplicateSubmission, record.annotator_id + " already labeled " +
                                                    record.patient_id);
    }
    if (record.submitted_at < record.started_at) {
        fail(WorkflowErrc::InvalidRecord, "submitted_at precedes started_at");
    }

    record.seq = next_seq_;
    record.received_at = received;
    commit(record);
    const auto& stored = std::get<AnnotationRecord>(log_.back());

    chart.submissions.emplace(stored.annotator_id, stored.seq);
    if (chart.submissions.size() < expected.size()) return stored;

    if (!chart.is_double()) {
        if (stored.label == Label::Unsure) chart.needs_adjudication = true;
        else finalize(chart, stored.label);
        return stored;
    }
    const Label a = annotation_at(chart.submissions.at(expected[0]))->label;
    const Label b = annotation_at(chart.submissions.at(expected[1]))->label;
    if (is_binary(a) && is_binary(b)) double_pairs_.emplace_back(a == Label::Positive, b == Label::Positive);
    if (a == b && a != Label::Unsure) finalize(chart, a);
    else chart.needs_adjudication = true;
    return stored;
}

AdjudicationRecord ValidationSession::submit_adjudication(AdjudicationRecord record,
                                                                 Timestamp received) {
    ensure_usable();
    if (phase_ == Phase::Stopped) fail(WorkflowErrc::SessionStopped, "session is stopped");
    const AnnotationRecord* target = annotation_at(record.supersedes_seq);
    if (!target) {
        fail(WorkflowErrc::UnknownAssignment,
             "adjudication references unknown annotation seq " + std::to_string(record.supersedes_seq));
    }
    ChartStatus& chart = charts_.at(target->patient_id);
    if (!chart.needs_adjudication) {
        fail(chart.final_label ? WorkflowErrc::DuplicateSubmission : WorkflowErrc::InvalidRecord,
             "chart " + chart.patient_id + " is not awaiting adjudication");
    }
    if (record.label == Label::Unsure) fail(WorkflowErrc::InvalidRecord, "adjudicated label cannot be unsure");
    if (record.adjudicator_id.empty()) fail(WorkflowErrc::InvalidRecord, "adjudicator_id is required");

    record.seq = next_seq_;
    record.received_at = received;
    commit(record);
    const auto& stored = std::get<AdjudicationRecord>(log_.back());
    finalize(chart, stored.label);
    return stored;
}

AdvanceRecord ValidationSession::compute_advance() const {
    AdvanceRecord r;
    r.seq = next_seq_;
    r.wave_index = current_wave_;
    r.phase_before = phase_;
    r.phase_after = phase_;

    const bool pools_left = frame_.remaining(Stratum::ClaimsPosReviewable) +
                                frame_.remaining(Stratum::ClaimsNegEhrPos) > 0;
    const bool gate_due = phase_ == Phase::DoubleAnnotation ||
                          (phase_ == Phase::Training &&
                           (double_charts_issued_ >= config_.training_batch || !pools_left));
    if (gate_due) {
        bool pass = false;
        if (!double_pairs_.empty()) {
            try {
                const AgreementReport k = cohen_kappa(double_pairs_, config_.kappa_threshold);
                r.kappa = k.kappa;
                pass = k.pass;
            } catch (const UndefinedMetric&) {
            }
        }
        r.phase_after = pass ? Phase::Independent : Phase::DoubleAnnotation;
    } else if (phase_ == Phase::Independent) {
        r.stop_evaluated = true;
        r.verdict = evaluate_stopping(posterior_, config_.stopping_rule()).verdict;
        if (r.verdict != Verdict::Continue && !stop_ && !config_.continue_after_stop) {
            r.phase_after = Phase::Stopped;
        }
    }
    r.posterior = posterior_;
    return r;
}

AdvanceRecord ValidationSession::advance_wave() {
    ensure_usable();
    if (phase_ == Phase::Stopped) fail(WorkflowErrc::SessionStopped, "session is stopped");
    if (current_wave_ == 0 || current_advanced_) fail(WorkflowErrc::NoActiveWave, "no open wave");
    for (const PatientId& id : current_charts_) {
        if (!charts_.at(id).final_label) {
            fail(WorkflowErrc::WaveIncomplete, "wave " + std::to_string(current_wave_) +
                                                   " has unfinished chart " + id);
        }
    }

    commit(compute_advance());
    const auto& r = std::get<AdvanceRecord>(log_.back());

    const StoppingDecision d = evaluate_stopping(posterior_, config_.stopping_rule());
    TrajectoryPoint pt;
    pt.wave_index = r.wave_index;
    pt.phase = current_wave_phase_;
    pt.posterior = posterior_;
    pt.point_estimate = d.point_estimate;
    pt.lower = d.interval.lower;
    pt.upper = d.interval.upper;
    pt.stop_evaluated = r.stop_evaluated;
    pt.verdict = r.stop_evaluated ? r.verdict : Verdict::Continue;
    pt.charts_reviewed = charts_drawn_;
    trajectory_.push_back(pt);

    if (r.stop_evaluated && r.verdict != Verdict::Continue && !stop_) {
        stop_ = StopRecord{r.verdict, false, r.wave_index, charts_drawn_, posterior_, labels_};
    }
    phase_ = r.phase_after;
    current_advanced_ = true;
    return r;
}

std::vector<Assignment> ValidationSession::open_assignments(std::string_view annotator_id) const {
    std::vector<Assignment> out;
    if (current_advanced_ || phase_ == Phase::Stopped) return out;
    for (const PatientId& id : current_charts_) {
        const ChartStatus& c = charts_.at(id);
        const bool assigned = std::find(c.expected_annotators.begin(), c.expected_annotators.end(),
                                        annotator_id) != c.expected_annotators.end();
        if (assigned && !c.submissions.count(std::string(annotator_id))) {
            out.push_back({id, std::string(annotator_id), c.wave_index, true});
        }
    }
    return out;
}

std::vector<std::uint64_t> ValidationSession::pending_adjudications() const {
    std::vector<std::uint64_t> out;
    for (const PatientId& id : current_charts_) {
        const ChartStatus& c = charts_.at(id);
        if (!c.needs_adjudication) continue;
        for (const auto& [annotator, seq] : c.submissions) out.push_back(seq);
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::optional<AgreementReport> ValidationSession::agreement() const {
    if (double_pairs_.empty()) return std::nullopt;
    try {
        return cohen_kappa(double_pairs_, config_.kappa_threshold);
    } catch (const UndefinedMetric&) {
        return std::nullopt;
    }
}

SavingsReport ValidationSession::savings() const {
    SavingsReport s;
    s.pool_total = frame_.sampleable_pool();
    s.reviewed = charts_drawn_;
    if (stop_ && stop_->verdict != Verdict::Continue) {
        s.stopped_by_rule = true;
        s.stop_wave = stop_->wave_index;
        s.reviewed = stop_->charts_reviewed;
        s.savings = 1.0 - static_cast<double>(s.reviewed) / static_cast<double>(s.pool_total);
    }
    return s;
}

std::vector<TimedReview> ValidationSession::timed_reviews() const {
    std::vector<TimedReview> out;
    for (const LogRecord& r : log_) {
        if (const auto* a = std::get_if<AnnotationRecord>(&r)) {
            out.push_back({a->patient_id, a->duration_minutes(), a->highlights_enabled});
        }
    }
    return out;
}

SessionState ValidationSession::state() const {
    SessionState s;
    s.phase = phase_;
    s.posterior = posterior_;
    s.labels = labels_;
    s.unannotatable = unannotatable_;
    s.drawn = frame_.drawn_counts();
    s.double_pairs = double_pairs_;
    s.stop = stop_;
    s.trajectory = trajectory_;
    s.charts = charts_;
    s.next_seq = next_seq_;
    s.current_wave = current_wave_;
    s.current_wave_advanced = current_advanced_;
    return s;
}

ValidationSession ValidationSession::replay(std::vector<PatientEvidence> cohort,
                                            SessionConfig config, std::span<const LogRecord> log) {
    ValidationSession s(std::move(cohort), std::move(config));
    for (const LogRecord& rec : log) {
        const std::uint64_t seq = seq_of(rec);
        const std::string at = "log record seq " + std::to_string(seq);
        if (seq != s.next_seq_) {
            throw LogCorruption(at + ": expected seq " + std::to_string(s.next_seq_));
        }
        try {
            if (const auto* w = std::get_if<WaveRecord>(&rec)) {
                const WaveRecord again = s.next_batch(w->issued_at);
                if (again != *w) throw LogCorruption(at + ": wave draw does not match the seeded frame");
            } else if (const auto* a = std::get_if<AnnotationRecord>(&rec)) {
                if (!s.frame_.find(a->patient_id)) {
                    throw LogCorruption(at + ": unknown patient " + a->patient_id);
                }
                const auto again = s.submit_annotation(*a, a->received_at.value_or(a->submitted_at));
                AnnotationRecord expected = *a;
                if (!expected.received_at) expected.received_at = again.received_at;
                if (again != expected) throw LogCorruption(at + ": annotation fields changed on replay");
            } else if (const auto* j = std::get_if<AdjudicationRecord>(&rec)) {
                const auto again = s.submit_adjudication(*j, j->received_at.value_or(Timestamp{}));
                AdjudicationRecord expected = *j;
                if (!expected.received_at) expected.received_at = again.received_at;
                if (again != expected) throw LogCorruption(at + ": adjudication fields changed on replay");
            } else {
                const auto& adv = std::get<AdvanceRecord>(rec);
                if (s.advance_wave() != adv) {
                    throw LogCorruption(at + ": advance outcome differs from the logged one");
                }
            }
        } catch (const WorkflowError& e) {
            throw LogCorruption(at + ": " + e.what());
        }
    }
    return s;
}

} // namespace chartval
