#pragma once

// Synthetic cohorts with a hidden truth table, oracle annotators, and end-to-end session runs
// scored against that truth.

#include "chartval/highlighter.hpp"
#include "chartval/workflow.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace chartval {

struct SyntheticCohortSpec {
    std::size_t cohort_size = 20000;
    double prevalence = 0.02;
    double claims_sensitivity = 0.6;
    double claims_ppv = 0.6;
    // Used only where the (sensitivity, PPV) pair does not determine it: prevalence 0 or PPV 0.
    std::optional<double> claims_false_positive_rate;
    double reviewability = 0.7;          // P(contact within the window | claims+)
    double term_emission_rate = 0.5;     // per note, true positives
    double false_mention_rate = 0.0005;  // per note, true negatives
    double negated_mention_rate = 0.05;  // per note, anyone
    double death_record_rate = 0.5;      // among positives invisible to claims and notes
    std::size_t notes_min = 1;
    std::size_t notes_max = 6;
    double notes_mean = 3.0;
    std::int32_t window_days = 60;
    std::uint64_t seed = 1;

    /// Throws DomainError on out-of-range fields.
    void validate() const;
    bool operator==(const SyntheticCohortSpec&) const = default;
};

/// Per-patient claims+ probabilities implied by the spec.
struct OperatingPoint {
    double true_positive_rate = 0.0;  // P(claims+ | outcome)
    double false_positive_rate = 0.0; // P(claims+ | no outcome)
};

/// Throws DomainError when the requested sensitivity/PPV pair cannot occur at the prevalence.
OperatingPoint operating_point(const SyntheticCohortSpec& spec);

struct TruthRow {
    PatientId patient_id;
    bool outcome = false;
    bool claims_positive = false;
};

/// Raw (unweighted) metrics of the claims algorithm against the hidden truth; empty when the
/// denominator is zero.
struct TrueMetrics {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
    std::optional<double> ppv, npv, sensitivity, specificity;

    bool operator==(const TrueMetrics&) const = default;
};

TrueMetrics score_truth(const std::vector<TruthRow>& truth);

struct GenerateOptions {
    bool emit_notes = true;       // false skips note text; evidence is still produced
    bool count_negated = false;   // must match the session's setting
};

struct GeneratedCohort {
    std::vector<PatientRecord> records;
    std::vector<ClinicalNote> notes;       // empty unless emit_notes
    TermDictionary dictionary;
    std::vector<PatientEvidence> evidence; // what derive_evidence yields on the emitted notes
    std::vector<TruthRow> truth;           // hidden, aligned with records
    TrueMetrics true_metrics;
};

/// Built-in self-harm concept dictionary used for generated notes.
TermDictionary synthetic_dictionary();

GeneratedCohort generate_cohort(const SyntheticCohortSpec& spec, const GenerateOptions& opts = {});

struct OracleAnnotator {
    double error_rate = 0.0;  // probability of flipping the true label
    double unsure_rate = 0.0; // probability of answering unsure
    std::uint64_t seed = 7;

    void validate() const;
    bool operator==(const OracleAnnotator&) const = default;
};

struct RunResult {
    std::uint64_t cohort_seed = 0;
    std::size_t cohort_size = 0;
    double spec_ppv = 0.0;
    Verdict verdict = Verdict::Continue; // first rule-based stop, Continue if none
    std::optional<int> stop_wave;
    int waves = 0;
    std::size_t pool = 0;
    std::size_t reviewed = 0;            // at stop, or everything drawn when no stop fired
    double savings = 0.0;
    TrueMetrics truth;
    PosteriorState at_stop;              // posterior at the stop (or at depletion)
    std::optional<double> at_stop_ppv;
    double at_stop_lower = 0.0;
    double at_stop_upper = 1.0;
    std::optional<bool> covers;          // at-stop interval contains the true PPV
    std::optional<double> est_ppv, est_npv, est_sensitivity, est_specificity; // final labels
    std::optional<double> kappa;
    std::size_t charts_labeled = 0;

    bool operator==(const RunResult&) const = default;
};

/// Runs the session to a stop (or depletion, with continue_after_stop) using oracle labels;
/// disagreements and unsure answers are adjudicated with the true label.
RunResult simulate_run(const SyntheticCohortSpec& spec, const OracleAnnotator& oracle,
                       const SessionConfig& config);

/// Same, over an already generated cohort.
RunResult simulate_run(const GeneratedCohort& cohort, const SyntheticCohortSpec& spec,
                       const OracleAnnotator& oracle, const SessionConfig& config);

struct SimulationPlan {
    SyntheticCohortSpec cohort;
    OracleAnnotator oracle;
    SessionConfig session;
    std::size_t replicates = 1;
    std::vector<double> ppv_grid;          // empty = cohort.claims_ppv only
    std::vector<std::size_t> size_grid;    // empty = cohort.cohort_size only
    std::uint64_t seed = 1;
    unsigned threads = 0;                  // 0 = hardware concurrency

    SimulationPlan();
};

/// key=value lines; cohort, oracle_* and sweep keys are recognised here, everything else is
/// handed to the session config parser.
SimulationPlan parse_simulation_plan(std::istream& in);
SimulationPlan load_simulation_plan(const std::string& path);

struct SweepCell {
    double ppv = 0.0;
    std::size_t cohort_size = 0;
};

std::vector<SweepCell> sweep_cells(const SimulationPlan& plan);

struct ReplicateInputs {
    SyntheticCohortSpec cohort;
    OracleAnnotator oracle;
    SessionConfig session;
};

/// Seeds for replicate r of cell c are derived from (plan.seed, c, r) only.
ReplicateInputs replicate_inputs(const SimulationPlan& plan, std::size_t cell, std::size_t replicate);

struct MeanError {
    std::size_t n = 0;
    double bias = 0.0;           // mean(estimate - truth)
    double mean_abs_error = 0.0;
};

struct CellSummary {
    SweepCell cell;
    std::size_t replicates = 0;
    std::map<int, std::size_t> stop_waves; // 0 = no rule-based stop
    std::size_t success = 0, futility = 0, no_stop = 0;
    double mean_savings = 0.0;
    double mean_reviewed = 0.0;
    std::size_t coverage_n = 0;
    double coverage = 0.0;
    MeanError ppv, npv, sensitivity, specificity;
};

struct SweepResult {
    std::vector<RunResult> runs; // cell-major, replicate-minor
    std::vector<CellSummary> cells;
};

SweepResult sweep_experiment(const SimulationPlan& plan);

CellSummary summarize_cell(const SweepCell& cell, std::span<const RunResult> runs);

void write_runs_csv(std::ostream& out, std::span<const RunResult> runs);
std::string format_summary_json(const SweepResult& result);
std::string format_run_json(const RunResult& r);

} // namespace chartval
