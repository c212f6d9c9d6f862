#pragma once

// Persistent artifacts. Cohort, notes and the annotation log are newline-delimited JSON objects
// (one self-describing record per line, UTF-8); the dictionary is a `concept_id,term` CSV and
// the session config a key=value file.

#include "chartval/highlighter.hpp"
#include "chartval/workflow.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace chartval {

using Json = nlohmann::ordered_json;

struct Diagnostic {
    std::size_t line = 0; // 0 = whole file
    std::string message;
    bool error = true;
};

struct LoadOptions {
    bool strict = true; // any invalid line fails the load; lenient mode skips it with a warning
};

template <class T>
struct Loaded {
    std::vector<T> items;
    std::vector<Diagnostic> diagnostics;
};

// Cohort file -----------------------------------------------------------------------------

Json to_json(const PatientRecord& p);
PatientRecord patient_from_json(const Json& j);
Loaded<PatientRecord> parse_cohort(std::istream& in, const LoadOptions& opts = {});
Loaded<PatientRecord> load_cohort(const std::filesystem::path& path, const LoadOptions& opts = {});
void write_cohort(const std::filesystem::path& path, std::span<const PatientRecord> cohort);

// Notes file ------------------------------------------------------------------------------

Json to_json(const ClinicalNote& n);
ClinicalNote note_from_json(const Json& j);
/// When `cohort_ids` is given, every note must reference a cohort patient.
Loaded<ClinicalNote> parse_notes(std::istream& in, const std::set<std::string>* cohort_ids,
                                 const LoadOptions& opts = {});
Loaded<ClinicalNote> load_notes(const std::filesystem::path& path,
                                const std::set<std::string>* cohort_ids,
                                const LoadOptions& opts = {});
void write_notes(const std::filesystem::path& path, std::span<const ClinicalNote> notes);

// Dictionary CSV --------------------------------------------------------------------------

TermDictionary parse_dictionary(std::istream& in, bool case_fold = true);
TermDictionary load_dictionary(const std::filesystem::path& path, bool case_fold = true);
void write_dictionary(const std::filesystem::path& path, const TermDictionary& dict);

// Config ----------------------------------------------------------------------------------

SessionConfig parse_config(std::istream& in, SessionConfig base = {});
SessionConfig load_config(const std::filesystem::path& path, SessionConfig base = {});
/// Applies one key=value pair; throws ParseError on unknown keys or bad values.
void apply_config_value(SessionConfig& cfg, std::string_view key, std::string_view value);
std::string format_config(const SessionConfig& cfg);

// Annotation log --------------------------------------------------------------------------

Json to_json(const LogRecord& r);
LogRecord log_record_from_json(const Json& j);
Json to_json(const TrajectoryPoint& p);
Json to_json(const Assignment& a);
/// Single line, no trailing newline.
std::string serialize_record(const LogRecord& r);

struct LogContents {
    std::vector<LogRecord> records;
    std::optional<std::string> truncated_tail; // bytes after the last newline
};

/// Throws ParseError (with line number) on a malformed complete line.
LogContents read_log(const std::filesystem::path& path);
void write_log(const std::filesystem::path& path, std::span<const LogRecord> records);

/// Single appender for one log file, holding an exclusive advisory lock while open. Opening
/// quarantines a truncated tail line into `<log>.quarantine` and rejects seq regressions.
class LogWriter {
public:
    explicit LogWriter(const std::filesystem::path& path);
    ~LogWriter();
    LogWriter(const LogWriter&) = delete;
    LogWriter& operator=(const LogWriter&) = delete;
    LogWriter(LogWriter&& other) noexcept;
    LogWriter& operator=(LogWriter&& other) noexcept;

    /// Writes one line and flushes it to stable storage; returns the record's seq.
    std::uint64_t append(const LogRecord& record);

    std::uint64_t last_seq() const noexcept { return last_seq_; }
    const std::vector<LogRecord>& recovered() const noexcept { return recovered_; }
    bool quarantined_tail() const noexcept { return quarantined_; }

private:
    std::filesystem::path path_;
    int fd_ = -1;
    std::uint64_t last_seq_ = 0;
    std::vector<LogRecord> recovered_;
    bool quarantined_ = false;
};

struct LogFinding {
    std::size_t line = 0;
    std::uint64_t seq = 0;
    std::string message;
};

struct VerifyReport {
    bool pass = true;
    std::size_t records = 0;
    std::vector<LogFinding> findings;
};

/// Seq density, referential integrity (against the cohort when given) and adjudication linkage.
VerifyReport verify_log(const std::filesystem::path& path,
                        const std::set<std::string>* cohort_ids = nullptr);
VerifyReport verify_log_text(std::string_view text, const std::set<std::string>* cohort_ids = nullptr);

// Session snapshot ------------------------------------------------------------------------

std::string sha256_hex(std::string_view bytes);

struct SessionSnapshot {
    std::string config;           // format_config echo
    StratumCounts populations{};
    StratumCounts drawn{};
    Phase phase = Phase::Training;
    PosteriorState posterior;
    int waves = 0;
    std::size_t log_records = 0;  // length of the log prefix summarized
    std::string log_sha256;       // hash of exactly those lines, newlines included

    bool operator==(const SessionSnapshot&) const = default;
};

SessionSnapshot make_snapshot(const ValidationSession& session);
Json to_json(const SessionSnapshot& s);
SessionSnapshot snapshot_from_json(const Json& j);
/// True iff the first `log_records` lines of the log hash to the snapshot's digest.
bool snapshot_matches(const SessionSnapshot& s, const std::filesystem::path& log_path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

} // namespace chartval
