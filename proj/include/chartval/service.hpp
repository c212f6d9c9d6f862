#pragma once

// A session directory on disk plus the live ValidationSession rebuilt from it. The CLI and the
// HTTP gateway both drive the workflow through this class.

#include "chartval/metrics.hpp"
#include "chartval/store.hpp"
#include "chartval/workflow.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace chartval {

struct SessionPaths {
    std::filesystem::path dir;

    std::filesystem::path config() const { return dir / "session.conf"; }
    std::filesystem::path cohort() const { return dir / "cohort.jsonl"; }
    std::filesystem::path notes() const { return dir / "notes.jsonl"; }
    std::filesystem::path dictionary() const { return dir / "dictionary.csv"; }
    std::filesystem::path log() const { return dir / "annotations.jsonl"; }
    std::filesystem::path snapshot() const { return dir / "snapshot.json"; }
    std::filesystem::path tokens() const { return dir / "tokens.conf"; }
};

enum class Role { Annotator, Adjudicator, Operator };

std::string_view to_string(Role r) noexcept;
Role parse_role(std::string_view text);

struct Principal {
    std::string user_id;
    Role role = Role::Annotator;
};

/// Static bearer tokens, one per line: `<token> <role> <user_id>`.
class TokenTable {
public:
    void add(std::string token, Principal who);
    const Principal* find(std::string_view token) const;
    std::size_t size() const noexcept { return by_token_.size(); }

    static TokenTable parse(std::istream& in);
    static TokenTable load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    /// Fresh random tokens for every configured annotator, one adjudicator and one operator.
    static TokenTable generate(const SessionConfig& config);

private:
    std::map<std::string, Principal, std::less<>> by_token_;
};

struct InitInputs {
    std::filesystem::path cohort;
    std::filesystem::path notes;
    std::filesystem::path dictionary;
    SessionConfig config;
};

struct ReplayOutput {
    SessionState state;
    std::vector<TrajectoryPoint> trajectory;
    SavingsReport savings;
    std::optional<StopRecord> stop;
};

class SessionService {
public:
    using ClockFn = std::function<Timestamp()>;

    /// Validates the inputs, copies them into `dir` and writes config, tokens and an empty
    /// log. Throws Error when the directory already holds a session.
    static void init(const std::filesystem::path& dir, const InitInputs& inputs);

    /// Loads the directory, takes the log lock and rebuilds the session from the log.
    explicit SessionService(const std::filesystem::path& dir, ClockFn clock = {});
    ~SessionService();

    const SessionPaths& paths() const noexcept { return paths_; }
    const SessionConfig& config() const noexcept { return config_; }
    bool recovered_tail() const noexcept { return recovered_tail_; }

    // mutations ------------------------------------------------------------------------------
    WaveRecord next_wave();
    AdvanceRecord advance();
    AnnotationRecord submit(AnnotationRecord record);
    AdjudicationRecord adjudicate(AdjudicationRecord record);

    // reads ----------------------------------------------------------------------------------
    Json status() const;
    std::vector<Assignment> assignments(std::string_view annotator_id) const;
    /// Throws WorkflowError(UnknownPatient) for charts that were never issued.
    ChartView chart(std::string_view patient_id) const;
    std::vector<TrajectoryPoint> trajectory() const;
    /// "at-stop" uses the labels frozen at the first stop (current labels while running);
    /// "full" uses every label collected so far.
    PerformanceReport report(std::string_view snapshot) const;
    std::optional<AgreementReport> agreement() const;
    TimingSummary timing() const;
    SavingsReport savings() const;
    std::vector<std::uint64_t> pending_adjudications() const;
    SessionState state() const;
    std::vector<LogRecord> log() const;

private:
    SessionPaths paths_;
    SessionConfig config_;
    ClockFn clock_;
    TermDictionary dictionary_;
    std::vector<ClinicalNote> notes_;
    std::map<std::string, std::vector<std::size_t>, std::less<>> notes_by_patient_;
    std::unique_ptr<LogWriter> writer_;
    std::unique_ptr<ValidationSession> session_;
    bool recovered_tail_ = false;
    mutable std::shared_mutex mutex_;

    Timestamp now() const;
    void write_snapshot() const;
};

/// Rebuilds a session from a log without touching the session directory.
ReplayOutput replay_session(const std::filesystem::path& dir, const std::filesystem::path& log);

/// Loads cohort, notes and dictionary from a session directory and derives EHR evidence.
std::vector<PatientEvidence> load_evidence(const SessionPaths& paths, const SessionConfig& config);

Json to_json(const PerformanceReport& r);
Json to_json(const AgreementReport& r);
Json to_json(const TimingSummary& t);
Json to_json(const SavingsReport& s);
Json to_json(const ChartView& v, std::string_view patient_id, bool highlights = true);
Json trajectory_json(const std::vector<TrajectoryPoint>& points);

/// Maps library exceptions to HTTP-style status codes (400, 404, 409, 423, 500).
int status_for(const std::exception& e) noexcept;

} // namespace chartval
