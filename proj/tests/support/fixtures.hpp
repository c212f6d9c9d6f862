#pragma once

// Reference cohort: 265 reviewable claims+ charts and 265
// claims-/EHR+ charts (a 530-chart pool), with claims+ labels chosen so that the cumulative
// interval first falls below the threshold after wave 12.

#include "chartval/service.hpp"
#include "chartval/store.hpp"
#include "chartval/workflow.hpp"

#include <filesystem>
#include <unistd.h>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fixture {

using namespace chartval;

// Claims+ labels in draw order, five per wave: P positive, N negative, U unannotatable.
inline constexpr std::string_view kClaimsPosLabels =
    "PPPNP" "PNPPN" "PPNPN" "NPPNP" "PPNPU" "PNPPN"
    "PPNPN" "NPPPN" "PPNPP" "PNPPU" "PPNPN" "NNNNN"
    "PPPPP" "PPPPP" "PPPPP" "PPPPP";

inline std::string padded(std::string_view prefix, std::size_t i) {
    std::string n = std::to_string(i);
    return std::string(prefix) + std::string(n.size() < 4 ? 4 - n.size() : 0, '0') + n;
}

struct CohortFiles {
    std::vector<PatientRecord> cohort;
    std::vector<ClinicalNote> notes;
    TermDictionary dictionary;
};

inline TermDictionary dictionary() {
    TermDictionary d;
    d.add("SH01", "self-harm");
    d.add("SH02", "intentional overdose");
    d.add("SH03", "suicide attempt");
    return d;
}

inline CohortFiles reference_cohort(std::size_t reviewable = 265, std::size_t ehr_pos = 265,
                                std::size_t group1 = 40, std::size_t group3 = 23,
                                std::size_t nonreviewable = 12) {
    CohortFiles f{{}, {}, dictionary()};
    const Date base(2017, 1, 1);
    for (std::size_t i = 0; i < reviewable; ++i) {
        PatientRecord p;
        p.patient_id = padded("CP", i);
        p.claims_positive = true;
        p.claims_outcome_date = base + static_cast<std::int32_t>(i % 300);
        p.healthcare_contact_dates = {*p.claims_outcome_date + 3};
        f.notes.push_back({p.patient_id, p.patient_id + "-1", *p.claims_outcome_date,
                           "Seen in the emergency department. Possible intentional overdose."});
        f.notes.push_back({p.patient_id, p.patient_id + "-2", *p.claims_outcome_date + 10,
                           "Follow-up visit. Patient denies self-harm since discharge."});
        f.notes.push_back({p.patient_id, p.patient_id + "-0", *p.claims_outcome_date - 20,
                           "Routine care. Vital signs stable."});
        f.cohort.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < nonreviewable; ++i) {
        PatientRecord p;
        p.patient_id = padded("CN", i);
        p.claims_positive = true;
        p.claims_outcome_date = base + static_cast<std::int32_t>(i);
        p.healthcare_contact_dates = {*p.claims_outcome_date + 400};
        f.cohort.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < ehr_pos; ++i) {
        PatientRecord p;
        p.patient_id = padded("EP", i);
        p.healthcare_contact_dates = {base + 100};
        f.notes.push_back({p.patient_id, p.patient_id + "-1", base + static_cast<std::int32_t>(i % 200),
                           "History of self-harm noted in problem list."});
        f.cohort.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < group1; ++i) {
        PatientRecord p;
        p.patient_id = padded("GA", i);
        f.notes.push_back({p.patient_id, p.patient_id + "-1", base + 5,
                           "Screening done. Patient denies self-harm or suicide attempt."});
        f.cohort.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < group3; ++i) {
        PatientRecord p;
        p.patient_id = padded("GD", i);
        p.death_record_suicide = true;
        f.cohort.push_back(std::move(p));
    }
    return f;
}

inline std::vector<PatientEvidence> reference_evidence() {
    const CohortFiles f = reference_cohort();
    return derive_evidence(f.cohort, f.notes, f.dictionary, false);
}

inline Label from_char(char c) {
    switch (c) {
    case 'P': return Label::Positive;
    case 'N': return Label::Negative;
    case 'U': return Label::Unannotatable;
    default: return Label::Unsure;
    }
}

// Assigns labels per chart: claims+ charts consume the label string in draw order, claims-
// charts are negative.
class Labeler {
public:
    Label label(const ChartDraw& d) {
        const auto it = labels_.find(d.patient_id);
        if (it != labels_.end()) return it->second;
        Label l = Label::Negative;
        if (d.stratum == Stratum::ClaimsPosReviewable) {
            l = next_ < kClaimsPosLabels.size() ? from_char(kClaimsPosLabels[next_]) : Label::Positive;
            ++next_;
        }
        labels_.emplace(d.patient_id, l);
        return l;
    }

private:
    std::size_t next_ = 0;
    std::map<std::string, Label> labels_;
};

inline Timestamp t0() { return parse_timestamp("2024-03-01T09:00:00.000Z"); }

inline AnnotationRecord annotation(const Assignment& a, Label l, Timestamp start, int minutes) {
    AnnotationRecord r;
    r.wave_index = a.wave_index;
    r.patient_id = a.patient_id;
    r.annotator_id = a.annotator_id;
    r.label = l;
    r.reason_code = l == Label::Positive ? "documented self-harm" : "";
    r.started_at = start;
    r.submitted_at = start + std::chrono::minutes(minutes);
    r.highlights_enabled = a.highlights_enabled;
    return r;
}

// Runs waves until the session stops or `max_waves` waves have been closed.
inline void drive(ValidationSession& s, int max_waves = 1000) {
    Labeler lab;
    Timestamp clock = t0();
    for (int w = 0; w < max_waves && s.phase() != Phase::Stopped; ++w) {
        const WaveRecord wave = s.next_batch(clock);
        if (wave.pool_exhausted) break;
        std::map<std::string, ChartDraw> draws;
        for (const ChartDraw& d : wave.draws) draws.emplace(d.patient_id, d);
        int i = 0;
        for (const Assignment& a : wave.assignments) {
            const AnnotationRecord r = annotation(a, lab.label(draws.at(a.patient_id)), clock, 5 + (i++ % 4));
            clock = r.submitted_at;
            s.submit_annotation(r, clock);
        }
        s.advance_wave();
    }
}

// Same loop through the service layer, as the CLI and gateway do it.
inline void drive(SessionService& s, int max_waves = 1000) {
    Labeler lab;
    Timestamp clock = t0();
    for (int w = 0; w < max_waves && s.state().phase != Phase::Stopped; ++w) {
        const WaveRecord wave = s.next_wave();
        if (wave.pool_exhausted) break;
        std::map<std::string, ChartDraw> draws;
        for (const ChartDraw& d : wave.draws) draws.emplace(d.patient_id, d);
        int i = 0;
        for (const Assignment& a : wave.assignments) {
            const AnnotationRecord r = annotation(a, lab.label(draws.at(a.patient_id)), clock, 5 + (i++ % 4));
            clock = r.submitted_at;
            s.submit(r);
        }
        s.advance();
    }
}

// Writes the cohort inputs into `dir` and initializes a session directory under it.
inline std::filesystem::path make_session_dir(const std::filesystem::path& root,
                                              const SessionConfig& config = {},
                                              const CohortFiles& files = reference_cohort()) {
    std::filesystem::create_directories(root / "inputs");
    write_cohort(root / "inputs" / "cohort.jsonl", files.cohort);
    write_notes(root / "inputs" / "notes.jsonl", files.notes);
    write_dictionary(root / "inputs" / "dictionary.csv", files.dictionary);
    const auto dir = root / "session";
    SessionService::init(dir, {root / "inputs" / "cohort.jsonl", root / "inputs" / "notes.jsonl",
                               root / "inputs" / "dictionary.csv", config});
    return dir;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(std::string_view tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("chartval-" + std::string(tag) + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

} // namespace fixture
