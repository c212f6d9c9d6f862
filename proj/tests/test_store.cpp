#include "chartval/error.hpp"
#include "chartval/store.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace chartval;
using fixture::TempDir;

namespace {

std::vector<LogRecord> sample_log(int waves = 3) {
    ValidationSession s(fixture::reference_evidence(), SessionConfig{});
    fixture::drive(s, waves);
    return s.log();
}

bool has_finding(const VerifyReport& r, std::string_view needle) {
    for (const auto& f : r.findings) {
        if (f.message.find(needle) != std::string::npos) return true;
    }
    return false;
}

std::string log_text(const std::vector<LogRecord>& log) {
    std::string out;
    for (const auto& r : log) out += serialize_record(r) + "\n";
    return out;
}

} // namespace

TEST_CASE("cohort and notes round-trip") {
    TempDir tmp("store-rt");
    const auto f = fixture::reference_cohort(20, 20, 5, 3, 2);
    write_cohort(tmp.path() / "c.jsonl", f.cohort);
    write_notes(tmp.path() / "n.jsonl", f.notes);
    write_dictionary(tmp.path() / "d.csv", f.dictionary);

    const auto cohort = load_cohort(tmp.path() / "c.jsonl");
    CHECK(cohort.items == f.cohort);
    CHECK(cohort.diagnostics.empty());
    std::set<std::string> ids;
    for (const auto& p : cohort.items) ids.insert(p.patient_id);
    const auto notes = load_notes(tmp.path() / "n.jsonl", &ids);
    REQUIRE(notes.items.size() == f.notes.size());
    for (std::size_t i = 0; i < notes.items.size(); ++i) {
        CHECK(notes.items[i].note_id == f.notes[i].note_id);
        CHECK(notes.items[i].date == f.notes[i].date);
        CHECK(notes.items[i].text == f.notes[i].text);
    }
    CHECK(load_dictionary(tmp.path() / "d.csv").entries() == f.dictionary.entries());

    PatientRecord fu;
    fu.patient_id = "F1";
    fu.followup = DateRange{Date(2019, 1, 1), Date(2019, 12, 31)};
    CHECK(patient_from_json(to_json(fu)) == fu);
}

TEST_CASE("strict and lenient cohort parsing") {
    const std::string text =
        "{\"patient_id\":\"A\",\"claims_positive\":false,\"death_record_suicide\":false,"
        "\"healthcare_contact_dates\":[]}\n"
        "{\"patient_id\":\"B\",\"claims_positive\":true,\"death_record_suicide\":false,"
        "\"healthcare_contact_dates\":[]}\n"
        "not json\n"
        "{\"patient_id\":\"C\",\"claims_positive\":true,\"claims_outcome_date\":\"2019-02-03\","
        "\"death_record_suicide\":false,\"healthcare_contact_dates\":[\"2019-02-04\"]}\n";
    {
        std::istringstream in(text);
        try {
            parse_cohort(in);
            FAIL("expected ParseError");
        } catch (const ParseError& e) {
            CHECK(e.line() == 2);
        }
    }
    std::istringstream in(text);
    const auto lenient = parse_cohort(in, {false});
    REQUIRE(lenient.items.size() == 2);
    CHECK(lenient.items[1].claims_outcome_date == Date(2019, 2, 3));
    CHECK(lenient.diagnostics.size() == 2);
    CHECK(lenient.diagnostics[0].line == 2);
    CHECK(lenient.diagnostics[1].line == 3);

    std::istringstream empty("");
    const auto none = parse_cohort(empty);
    CHECK(none.items.empty());
    REQUIRE(none.diagnostics.size() == 1);
    CHECK_FALSE(none.diagnostics[0].error);
}

TEST_CASE("notes must reference known patients and be unique") {
    const std::set<std::string> ids{"A"};
    std::istringstream unknown("{\"patient_id\":\"Z\",\"note_id\":\"n\",\"date\":\"2020-01-01\",\"text\":\"x\"}\n");
    CHECK_THROWS_AS(parse_notes(unknown, &ids), ParseError);
    std::istringstream dup(
        "{\"patient_id\":\"A\",\"note_id\":\"n\",\"date\":\"2020-01-01\",\"text\":\"x\"}\n"
        "{\"patient_id\":\"A\",\"note_id\":\"n\",\"date\":\"2020-01-02\",\"text\":\"y\"}\n");
    CHECK_THROWS_AS(parse_notes(dup, &ids), ParseError);
}

TEST_CASE("dictionary CSV") {
    std::istringstream in("\xEF\xBB\xBF" "concept_id,term\r\nSH01,\"self-harm, deliberate\"\nSH02,\"said \"\"overdose\"\"\"\n");
    const auto d = parse_dictionary(in);
    REQUIRE(d.size() == 2);
    CHECK(d.entries()[0].term == "self-harm, deliberate");
    CHECK(d.entries()[1].term == "said \"overdose\"");
    std::istringstream bad("id,word\nA,b\n");
    CHECK_THROWS_AS(parse_dictionary(bad), ParseError);
}

TEST_CASE("config parsing and echo") {
    std::istringstream in("# comment\nthreshold = 0.8\nannotators = ann-a, ann-b, ann-c\nseed=42\n\n");
    const auto c = parse_config(in);
    CHECK(c.threshold == 0.8);
    CHECK(c.seed == 42);
    CHECK(c.annotators == std::vector<std::string>{"ann-a", "ann-b", "ann-c"});

    std::istringstream echo(format_config(c));
    CHECK(parse_config(echo) == c);

    const auto def = format_config(SessionConfig{});
    CHECK(def.find("threshold=0.75\n") != std::string::npos);
    CHECK(def.find("alpha=0.05\n") != std::string::npos);
    CHECK(def.find("batch_size=10\n") != std::string::npos);

    SessionConfig s;
    CHECK_THROWS_AS(apply_config_value(s, "nonsense", "1"), ParseError);
    CHECK_THROWS_AS(apply_config_value(s, "batch_size", "ten"), ParseError);
    CHECK_THROWS_AS(apply_config_value(s, "continue_after_stop", "maybe"), ParseError);
}

TEST_CASE("log records round-trip through JSON") {
    const auto log = sample_log(4);
    for (const LogRecord& r : log) {
        const auto back = log_record_from_json(Json::parse(serialize_record(r)));
        CHECK(back == r);
        CHECK(serialize_record(r).find('\n') == std::string::npos);
    }
}

TEST_CASE("log writer appends, locks and quarantines a torn tail") {
    TempDir tmp("store-log");
    const auto path = tmp.path() / "annotations.jsonl";
    const auto log = sample_log(2);
    {
        LogWriter w(path);
        CHECK(w.last_seq() == 0);
        for (const auto& r : log) w.append(r);
        CHECK(w.last_seq() == log.size());
        CHECK_THROWS_AS(w.append(log.front()), Error);
        CHECK_THROWS_AS(LogWriter{path}, Error);
    }
    const std::string good = read_file(path);
    CHECK(good == log_text(log));

    write_file(path, good + "{\"type\":\"annot");
    CHECK(read_log(path).truncated_tail == "{\"type\":\"annot");
    {
        LogWriter w(path);
        CHECK(w.quarantined_tail());
        CHECK(w.recovered() == log);
    }
    CHECK(read_file(path) == good);
    CHECK(read_file(tmp.path() / "annotations.jsonl.quarantine").find("{\"type\":\"annot") != std::string::npos);

    // a complete but malformed line is not silently dropped
    write_file(path, good + "garbage\n");
    CHECK_THROWS_AS(read_log(path), ParseError);

    // seq regression
    auto swapped = log;
    std::swap(swapped[1], swapped[2]);
    write_file(path, log_text(swapped));
    CHECK_THROWS_AS(LogWriter{path}, Error);
}

TEST_CASE("verify finds integrity problems") {
    const auto log = sample_log(3);
    const std::string text = log_text(log);
    std::set<std::string> ids;
    for (const auto& p : fixture::reference_evidence()) ids.insert(p.patient_id);

    const auto ok = verify_log_text(text, &ids);
    CHECK(ok.pass);
    CHECK(ok.records == log.size());

    // drop one line: gap
    auto gapped = log;
    gapped.erase(gapped.begin() + 4);
    CHECK(has_finding(verify_log_text(log_text(gapped)), "seq gap"));

    CHECK(has_finding(verify_log_text(text + "{\"ty"), "truncated tail"));

    const std::set<std::string> few{"nobody"};
    const auto unknown = verify_log_text(text, &few);
    CHECK_FALSE(unknown.pass);
    CHECK(has_finding(unknown, "unknown patient"));

    // an annotation repeated under a fresh seq
    auto dup = log;
    auto extra = std::get<AnnotationRecord>(dup[1]);
    extra.seq = dup.size() + 1;
    dup.push_back(extra);
    CHECK(has_finding(verify_log_text(log_text(dup)), "duplicate annotation"));

    auto orphan = log;
    AnnotationRecord stray = std::get<AnnotationRecord>(orphan[1]);
    stray.seq = orphan.size() + 1;
    stray.patient_id = "GA0000";
    orphan.push_back(stray);
    CHECK(has_finding(verify_log_text(log_text(orphan)), "without an issued assignment"));

    auto adj_log = log;
    AdjudicationRecord adj;
    adj.seq = adj_log.size() + 1;
    adj.supersedes_seq = 9999;
    adj.adjudicator_id = "lead";
    adj_log.push_back(adj);
    CHECK(has_finding(verify_log_text(log_text(adj_log)), "unknown seq"));
}

TEST_CASE("snapshot digests the log prefix") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");

    TempDir tmp("store-snap");
    ValidationSession s(fixture::reference_evidence(), SessionConfig{});
    fixture::drive(s, 2);
    write_log(tmp.path() / "log.jsonl", s.log());
    const auto snap = make_snapshot(s);
    CHECK(snap.log_records == s.log().size());
    CHECK(snap.waves == 2);
    CHECK(snapshot_from_json(to_json(snap)) == snap);
    CHECK(snapshot_matches(snap, tmp.path() / "log.jsonl"));

    // appending more records keeps the prefix valid
    fixture::drive(s, 1);
    write_log(tmp.path() / "log.jsonl", s.log());
    CHECK(snapshot_matches(snap, tmp.path() / "log.jsonl"));

    auto tampered = read_file(tmp.path() / "log.jsonl");
    tampered[tampered.find("annotator1")] = 'A';
    write_file(tmp.path() / "log.jsonl", tampered);
    CHECK_FALSE(snapshot_matches(snap, tmp.path() / "log.jsonl"));
}
