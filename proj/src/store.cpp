#include "chartval/store.hpp"

#include "chartval/error.hpp"

#include <openssl/evp.h>

#include <cerrno>
#include <charconv>
#include <cstring>
#include <fcntl.h>
#include <fstream>
#include <map>
#include <sstream>
#include <sys/file.h>
#include <unistd.h>

namespace chartval {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for " + path.string());
}

namespace {

std::ifstream open_in(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

const Json& field(const Json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end()) throw ParseError(std::string("missing field '") + key + "'");
    return *it;
}

std::string get_string(const Json& j, const char* key) {
    const Json& v = field(j, key);
    if (!v.is_string()) throw ParseError(std::string("field '") + key + "' must be a string");
    return v.get<std::string>();
}

bool get_bool(const Json& j, const char* key) {
    const Json& v = field(j, key);
    if (!v.is_boolean()) throw ParseError(std::string("field '") + key + "' must be a boolean");
    return v.get<bool>();
}

std::uint64_t get_u64(const Json& j, const char* key) {
    const Json& v = field(j, key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ParseError(std::string("field '") + key + "' must be a nonnegative integer");
    }
    return v.get<std::uint64_t>();
}

std::optional<Date> get_opt_date(const Json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(std::string("field '") + key + "' must be a date string");
    return Date::parse(it->get<std::string>());
}

std::optional<Timestamp> get_opt_time(const Json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return parse_timestamp(it->get<std::string>());
}

Json opt_date(const std::optional<Date>& d) { return d ? Json(d->iso()) : Json(nullptr); }
Json opt_time(const std::optional<Timestamp>& t) {
    return t ? Json(format_timestamp(*t)) : Json(nullptr);
}

// Reads newline-delimited JSON objects, delegating each to `parse`. Blank lines are skipped.
template <class T, class Fn>
Loaded<T> parse_lines(std::istream& in, const LoadOptions& opts, Fn&& parse, const char* what) {
    Loaded<T> out;
    std::string line;
    std::size_t lineno = 0;
    std::size_t non_blank = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        ++non_blank;
        try {
            const Json j = Json::parse(line);
            if (!j.is_object()) throw ParseError("record is not a JSON object");
            out.items.push_back(parse(j));
        } catch (const std::exception& e) {
            out.diagnostics.push_back({lineno, e.what(), opts.strict});
            if (opts.strict) {
                throw ParseError(std::string(what) + ": " + e.what(), lineno);
            }
        }
    }
    if (non_blank == 0) out.diagnostics.push_back({0, std::string(what) + " is empty", false});
    return out;
}

} // namespace

// Cohort ------------------------------------------------------------------------------------

Json to_json(const PatientRecord& p) {
    Json j;
    j["patient_id"] = p.patient_id;
    j["claims_positive"] = p.claims_positive;
    j["claims_outcome_date"] = opt_date(p.claims_outcome_date);
    j["death_record_suicide"] = p.death_record_suicide;
    Json dates = Json::array();
    for (const Date d : p.healthcare_contact_dates) dates.push_back(d.iso());
    j["healthcare_contact_dates"] = std::move(dates);
    if (p.followup) {
        j["followup_start"] = p.followup->first.iso();
        j["followup_end"] = p.followup->last.iso();
    }
    return j;
}

PatientRecord patient_from_json(const Json& j) {
    PatientRecord p;
    p.patient_id = get_string(j, "patient_id");
    if (p.patient_id.empty()) throw ParseError("patient_id is empty");
    p.claims_positive = get_bool(j, "claims_positive");
    p.claims_outcome_date = get_opt_date(j, "claims_outcome_date");
    p.death_record_suicide = get_bool(j, "death_record_suicide");
    const Json& dates = field(j, "healthcare_contact_dates");
    if (!dates.is_array()) throw ParseError("healthcare_contact_dates must be an array");
    for (const Json& d : dates) p.healthcare_contact_dates.push_back(Date::parse(d.get<std::string>()));
    const auto start = get_opt_date(j, "followup_start");
    const auto end = get_opt_date(j, "followup_end");
    if (start.has_value() != end.has_value()) {
        throw ParseError("followup_start and followup_end must appear together");
    }
    if (start) {
        if (*end < *start) throw ParseError("followup_end precedes followup_start");
        p.followup = DateRange{*start, *end};
    }
    if (p.claims_positive != p.claims_outcome_date.has_value()) {
        throw ParseError("claims_outcome_date must be present iff claims_positive (patient " +
                         p.patient_id + ")");
    }
    return p;
}

Loaded<PatientRecord> parse_cohort(std::istream& in, const LoadOptions& opts) {
    std::set<std::string> seen;
    return parse_lines<PatientRecord>(
        in, opts,
        [&](const Json& j) {
            PatientRecord p = patient_from_json(j);
            if (!seen.insert(p.patient_id).second) {
                throw ParseError("duplicate patient id " + p.patient_id);
            }
            return p;
        },
        "cohort");
}

Loaded<PatientRecord> load_cohort(const fs::path& path, const LoadOptions& opts) {
    auto in = open_in(path);
    return parse_cohort(in, opts);
}

void write_cohort(const fs::path& path, std::span<const PatientRecord> cohort) {
    auto out = open_out(path);
    for (const PatientRecord& p : cohort) out << to_json(p).dump() << '\n';
}

// Notes -------------------------------------------------------------------------------------

Json to_json(const ClinicalNote& n) {
    Json j;
    j["patient_id"] = n.patient_id;
    j["note_id"] = n.note_id;
    j["date"] = n.date.iso();
    j["text"] = n.text;
    return j;
}

ClinicalNote note_from_json(const Json& j) {
    return {get_string(j, "patient_id"), get_string(j, "note_id"),
            Date::parse(get_string(j, "date")), get_string(j, "text")};
}

Loaded<ClinicalNote> parse_notes(std::istream& in, const std::set<std::string>* cohort_ids,
                                 const LoadOptions& opts) {
    std::set<std::pair<std::string, std::string>> seen;
    return parse_lines<ClinicalNote>(
        in, opts,
        [&](const Json& j) {
            ClinicalNote n = note_from_json(j);
            if (n.note_id.empty()) throw ParseError("note_id is empty");
            if (cohort_ids && !cohort_ids->count(n.patient_id)) {
                throw ParseError("note " + n.note_id + " references unknown patient " + n.patient_id);
            }
            if (!seen.emplace(n.patient_id, n.note_id).second) {
                throw ParseError("duplicate note " + n.note_id + " for patient " + n.patient_id);
            }
            return n;
        },
        "notes");
}

Loaded<ClinicalNote> load_notes(const fs::path& path, const std::set<std::string>* cohort_ids,
                                const LoadOptions& opts) {
    auto in = open_in(path);
    return parse_notes(in, cohort_ids, opts);
}

void write_notes(const fs::path& path, std::span<const ClinicalNote> notes) {
    auto out = open_out(path);
    for (const ClinicalNote& n : notes) out << to_json(n).dump() << '\n';
}

// Dictionary --------------------------------------------------------------------------------

namespace {

// Minimal RFC 4180 field splitter: quoted fields may contain commas and doubled quotes.
std::vector<std::string> split_csv(std::string_view line, std::size_t lineno) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                fields.back() += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                fields.back() += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.emplace_back();
        } else {
            fields.back() += c;
        }
    }
    if (quoted) throw ParseError("unterminated quoted field", lineno);
    return fields;
}

std::string csv_quote(std::string_view s) {
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

} // namespace

TermDictionary parse_dictionary(std::istream& in, bool case_fold) {
    TermDictionary dict(case_fold);
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
        if (line.empty()) continue;
        auto fields = split_csv(line, lineno);
        if (!header) {
            if (fields.size() != 2 || fields[0] != "concept_id" || fields[1] != "term") {
                throw ParseError("dictionary header must be 'concept_id,term'", lineno);
            }
            header = true;
            continue;
        }
        if (fields.size() != 2) throw ParseError("expected 2 fields", lineno);
        if (fields[0].empty()) throw ParseError("empty concept_id", lineno);
        try {
            dict.add(std::move(fields[0]), fields[1]);
        } catch (const Error& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    if (!header) throw ParseError("dictionary is missing its header");
    return dict;
}

TermDictionary load_dictionary(const fs::path& path, bool case_fold) {
    auto in = open_in(path);
    return parse_dictionary(in, case_fold);
}

void write_dictionary(const fs::path& path, const TermDictionary& dict) {
    auto out = open_out(path);
    out << "concept_id,term\n";
    for (const auto& e : dict.entries()) out << csv_quote(e.concept_id) << ',' << csv_quote(e.term) << '\n';
}

// Config ------------------------------------------------------------------------------------

namespace {

std::string_view trim_ws(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ParseError("bad value '" + std::string(v) + "' for " + std::string(key));
    }
    return out;
}

bool parse_flag(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ParseError("bad boolean '" + std::string(v) + "' for " + std::string(key));
}

std::string fmt_double(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    // shortest form that round-trips
    for (int p = 1; p <= 17; ++p) {
        std::ostringstream t;
        t.precision(p);
        t << v;
        if (std::stod(t.str()) == v) return t.str();
    }
    return ss.str();
}

} // namespace

void apply_config_value(SessionConfig& cfg, std::string_view key, std::string_view value) {
    if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(key, value);
    else if (key == "claims_pos_quota") cfg.claims_pos_quota = parse_number<std::size_t>(key, value);
    else if (key == "claims_neg_quota") cfg.claims_neg_quota = parse_number<std::size_t>(key, value);
    else if (key == "threshold") cfg.threshold = parse_number<double>(key, value);
    else if (key == "alpha") cfg.alpha = parse_number<double>(key, value);
    else if (key == "kappa_threshold") cfg.kappa_threshold = parse_number<double>(key, value);
    else if (key == "training_batch") cfg.training_batch = parse_number<std::size_t>(key, value);
    else if (key == "window_days") cfg.window_days = parse_number<std::int32_t>(key, value);
    else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "count_negated_mentions") cfg.count_negated_mentions = parse_flag(key, value);
    else if (key == "continue_after_stop") cfg.continue_after_stop = parse_flag(key, value);
    else if (key == "bootstrap_replicates") cfg.bootstrap_replicates = parse_number<std::size_t>(key, value);
    else if (key == "annotators") {
        cfg.annotators.clear();
        std::size_t pos = 0;
        while (pos <= value.size()) {
            const std::size_t comma = value.find(',', pos);
            const std::size_t end = comma == std::string_view::npos ? value.size() : comma;
            const auto name = trim_ws(value.substr(pos, end - pos));
            if (name.empty()) throw ParseError("empty annotator name");
            cfg.annotators.emplace_back(name);
            pos = end + 1;
        }
    } else {
        throw ParseError("unknown config key '" + std::string(key) + "'");
    }
}

SessionConfig parse_config(std::istream& in, SessionConfig cfg) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view l = trim_ws(line);
        if (l.empty() || l.front() == '#') continue;
        const std::size_t eq = l.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key=value", lineno);
        try {
            apply_config_value(cfg, trim_ws(l.substr(0, eq)), trim_ws(l.substr(eq + 1)));
        } catch (const ParseError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return cfg;
}

SessionConfig load_config(const fs::path& path, SessionConfig base) {
    auto in = open_in(path);
    return parse_config(in, std::move(base));
}

std::string format_config(const SessionConfig& c) {
    std::ostringstream out;
    out << "batch_size=" << c.batch_size << '\n'
        << "claims_pos_quota=" << c.claims_pos_quota << '\n'
        << "claims_neg_quota=" << c.claims_neg_quota << '\n'
        << "threshold=" << fmt_double(c.threshold) << '\n'
        << "alpha=" << fmt_double(c.alpha) << '\n'
        << "kappa_threshold=" << fmt_double(c.kappa_threshold) << '\n'
        << "training_batch=" << c.training_batch << '\n'
        << "window_days=" << c.window_days << '\n'
        << "seed=" << c.seed << '\n'
        << "count_negated_mentions=" << (c.count_negated_mentions ? "true" : "false") << '\n'
        << "continue_after_stop=" << (c.continue_after_stop ? "true" : "false") << '\n'
        << "bootstrap_replicates=" << c.bootstrap_replicates << '\n'
        << "annotators=";
    for (std::size_t i = 0; i < c.annotators.size(); ++i) out << (i ? "," : "") << c.annotators[i];
    out << '\n';
    return out.str();
}

// Log records -------------------------------------------------------------------------------

Json to_json(const Assignment& a) {
    Json j;
    j["patient_id"] = a.patient_id;
    j["annotator_id"] = a.annotator_id;
    j["wave_index"] = a.wave_index;
    j["highlights_enabled"] = a.highlights_enabled;
    return j;
}

Json to_json(const LogRecord& r) {
    Json j;
    if (const auto* w = std::get_if<WaveRecord>(&r)) {
        j["type"] = "wave";
        j["seq"] = w->seq;
        j["wave_index"] = w->wave_index;
        j["phase"] = to_string(w->phase);
        j["pool_exhausted"] = w->pool_exhausted;
        j["issued_at"] = format_timestamp(w->issued_at);
        Json draws = Json::array();
        for (const ChartDraw& d : w->draws) {
            Json dj;
            dj["patient_id"] = d.patient_id;
            dj["stratum"] = to_string(d.stratum);
            dj["window_start"] = d.review_window.first.iso();
            dj["window_end"] = d.review_window.last.iso();
            draws.push_back(std::move(dj));
        }
        j["draws"] = std::move(draws);
        Json asg = Json::array();
        for (const Assignment& a : w->assignments) {
            Json aj;
            aj["patient_id"] = a.patient_id;
            aj["annotator_id"] = a.annotator_id;
            aj["highlights_enabled"] = a.highlights_enabled;
            asg.push_back(std::move(aj));
        }
        j["assignments"] = std::move(asg);
    } else if (const auto* a = std::get_if<AnnotationRecord>(&r)) {
        j["type"] = "annotation";
        j["seq"] = a->seq;
        j["wave_index"] = a->wave_index;
        j["patient_id"] = a->patient_id;
        j["annotator_id"] = a->annotator_id;
        j["label"] = to_string(a->label);
        j["reason_code"] = a->reason_code;
        j["started_at"] = format_timestamp(a->started_at);
        j["submitted_at"] = format_timestamp(a->submitted_at);
        j["received_at"] = opt_time(a->received_at);
        j["highlights_enabled"] = a->highlights_enabled;
    } else if (const auto* d = std::get_if<AdjudicationRecord>(&r)) {
        j["type"] = "adjudication";
        j["seq"] = d->seq;
        j["supersedes_seq"] = d->supersedes_seq;
        j["label"] = to_string(d->label);
        j["adjudicator_id"] = d->adjudicator_id;
        j["reason_code"] = d->reason_code;
        j["received_at"] = opt_time(d->received_at);
    } else {
        const auto& v = std::get<AdvanceRecord>(r);
        j["type"] = "advance";
        j["seq"] = v.seq;
        j["wave_index"] = v.wave_index;
        j["phase_before"] = to_string(v.phase_before);
        j["phase_after"] = to_string(v.phase_after);
        j["stop_evaluated"] = v.stop_evaluated;
        j["verdict"] = to_string(v.verdict);
        j["kappa"] = v.kappa ? Json(*v.kappa) : Json(nullptr);
        j["s"] = v.posterior.successes;
        j["k"] = v.posterior.trials;
    }
    return j;
}

LogRecord log_record_from_json(const Json& j) {
    const std::string type = get_string(j, "type");
    if (type == "wave") {
        WaveRecord w;
        w.seq = get_u64(j, "seq");
        w.wave_index = static_cast<int>(get_u64(j, "wave_index"));
        w.phase = parse_phase(get_string(j, "phase"));
        w.pool_exhausted = get_bool(j, "pool_exhausted");
        w.issued_at = parse_timestamp(get_string(j, "issued_at"));
        for (const Json& d : field(j, "draws")) {
            w.draws.push_back({get_string(d, "patient_id"), parse_stratum(get_string(d, "stratum")),
                               {Date::parse(get_string(d, "window_start")),
                                Date::parse(get_string(d, "window_end"))}});
        }
        for (const Json& a : field(j, "assignments")) {
            w.assignments.push_back({get_string(a, "patient_id"), get_string(a, "annotator_id"),
                                     w.wave_index, get_bool(a, "highlights_enabled")});
        }
        return w;
    }
    if (type == "annotation") {
        AnnotationRecord a;
        a.seq = j.contains("seq") ? get_u64(j, "seq") : 0;
        a.wave_index = j.contains("wave_index") ? static_cast<int>(get_u64(j, "wave_index")) : 0;
        a.patient_id = get_string(j, "patient_id");
        a.annotator_id = get_string(j, "annotator_id");
        a.label = parse_label(get_string(j, "label"));
        a.reason_code = j.contains("reason_code") ? get_string(j, "reason_code") : "";
        a.started_at = parse_timestamp(get_string(j, "started_at"));
        a.submitted_at = parse_timestamp(get_string(j, "submitted_at"));
        a.received_at = get_opt_time(j, "received_at");
        a.highlights_enabled = j.contains("highlights_enabled") ? get_bool(j, "highlights_enabled") : true;
        return a;
    }
    if (type == "adjudication") {
        AdjudicationRecord d;
        d.seq = j.contains("seq") ? get_u64(j, "seq") : 0;
        d.supersedes_seq = get_u64(j, "supersedes_seq");
        d.label = parse_label(get_string(j, "label"));
        d.adjudicator_id = get_string(j, "adjudicator_id");
        d.reason_code = j.contains("reason_code") ? get_string(j, "reason_code") : "";
        d.received_at = get_opt_time(j, "received_at");
        return d;
    }
    if (type == "advance") {
        AdvanceRecord v;
        v.seq = get_u64(j, "seq");
        v.wave_index = static_cast<int>(get_u64(j, "wave_index"));
        v.phase_before = parse_phase(get_string(j, "phase_before"));
        v.phase_after = parse_phase(get_string(j, "phase_after"));
        v.stop_evaluated = get_bool(j, "stop_evaluated");
        v.verdict = parse_verdict(get_string(j, "verdict"));
        if (const auto it = j.find("kappa"); it != j.end() && !it->is_null()) v.kappa = it->get<double>();
        v.posterior = {get_u64(j, "s"), get_u64(j, "k")};
        return v;
    }
    throw ParseError("unknown record type '" + type + "'");
}

Json to_json(const TrajectoryPoint& p) {
    Json j;
    j["wave_index"] = p.wave_index;
    j["phase"] = to_string(p.phase);
    j["s"] = p.posterior.successes;
    j["k"] = p.posterior.trials;
    j["point_estimate"] = p.point_estimate ? Json(*p.point_estimate) : Json(nullptr);
    j["lower"] = p.lower;
    j["upper"] = p.upper;
    j["stop_evaluated"] = p.stop_evaluated;
    j["verdict"] = to_string(p.verdict);
    j["charts_reviewed"] = p.charts_reviewed;
    return j;
}

std::string serialize_record(const LogRecord& r) { return to_json(r).dump(); }

LogContents read_log(const fs::path& path) {
    const std::string text = read_file(path);
    LogContents out;
    std::size_t pos = 0;
    std::size_t lineno = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) {
            out.truncated_tail = text.substr(pos);
            break;
        }
        ++lineno;
        const std::string_view line(text.data() + pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        try {
            out.records.push_back(log_record_from_json(Json::parse(line)));
        } catch (const std::exception& e) {
            throw ParseError(std::string("annotation log: ") + e.what(), lineno);
        }
    }
    return out;
}

void write_log(const fs::path& path, std::span<const LogRecord> records) {
    auto out = open_out(path);
    for (const LogRecord& r : records) out << serialize_record(r) << '\n';
}

// LogWriter ---------------------------------------------------------------------------------

LogWriter::LogWriter(const fs::path& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open log " + path.string() + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw Error("log " + path.string() + " is locked by another writer");
    }
    try {
        LogContents contents = read_log(path);
        if (contents.truncated_tail) {
            const fs::path q = fs::path(path.string() + ".quarantine");
            std::ofstream qs(q, std::ios::binary | std::ios::app);
            qs << *contents.truncated_tail << '\n';
            const auto keep = fs::file_size(path) - contents.truncated_tail->size();
            if (::ftruncate(fd_, static_cast<off_t>(keep)) != 0) {
                throw Error("cannot truncate log tail: " + std::string(std::strerror(errno)));
            }
            quarantined_ = true;
        }
        for (const LogRecord& r : contents.records) {
            const std::uint64_t s = seq_of(r);
            if (s <= last_seq_) {
                throw Error("log seq regression at seq " + std::to_string(s) + " in " + path.string());
            }
            last_seq_ = s;
        }
        recovered_ = std::move(contents.records);
        if (::lseek(fd_, 0, SEEK_END) < 0) throw Error("cannot seek log");
    } catch (...) {
        ::close(fd_);
        fd_ = -1;
        throw;
    }
}

LogWriter::~LogWriter() {
    if (fd_ >= 0) ::close(fd_);
}

LogWriter::LogWriter(LogWriter&& other) noexcept
    : path_(std::move(other.path_)), fd_(std::exchange(other.fd_, -1)), last_seq_(other.last_seq_),
      recovered_(std::move(other.recovered_)), quarantined_(other.quarantined_) {}

LogWriter& LogWriter::operator=(LogWriter&& other) noexcept {
    if (this != &other) {
        if (fd_ >= 0) ::close(fd_);
        path_ = std::move(other.path_);
        fd_ = std::exchange(other.fd_, -1);
        last_seq_ = other.last_seq_;
        recovered_ = std::move(other.recovered_);
        quarantined_ = other.quarantined_;
    }
    return *this;
}

std::uint64_t LogWriter::append(const LogRecord& record) {
    if (fd_ < 0) throw Error("log writer is closed");
    const std::uint64_t s = seq_of(record);
    if (s != last_seq_ + 1) {
        throw Error("append out of order: seq " + std::to_string(s) + " after " +
                    std::to_string(last_seq_));
    }
    const std::string line = serialize_record(record) + '\n';
    std::size_t done = 0;
    while (done < line.size()) {
        const ssize_t n = ::write(fd_, line.data() + done, line.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error("log write failed: " + std::string(std::strerror(errno)));
        }
        done += static_cast<std::size_t>(n);
    }
    if (::fdatasync(fd_) != 0) throw Error("log flush failed: " + std::string(std::strerror(errno)));
    last_seq_ = s;
    return s;
}

// verify ------------------------------------------------------------------------------------

VerifyReport verify_log_text(std::string_view text, const std::set<std::string>* cohort_ids) {
    VerifyReport rep;
    const auto finding = [&](std::size_t line, std::uint64_t seq, std::string msg) {
        rep.pass = false;
        rep.findings.push_back({line, seq, std::move(msg)});
    };

    std::uint64_t expected = 1;
    std::set<std::pair<std::string, std::string>> assigned;   // (patient, annotator)
    std::set<std::pair<std::string, std::string>> submitted;
    std::map<std::uint64_t, std::string> annotation_patient;  // seq -> patient
    std::set<std::uint64_t> adjudicated;

    std::size_t pos = 0;
    std::size_t lineno = 0;
    while (pos < text.size()) {
        const std::size_t nl = text.find('\n', pos);
        ++lineno;
        if (nl == std::string_view::npos) {
            finding(lineno, 0, "truncated tail line (no trailing newline)");
            break;
        }
        const std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (line.empty()) continue;
        LogRecord rec;
        try {
            rec = log_record_from_json(Json::parse(line));
        } catch (const std::exception& e) {
            finding(lineno, 0, std::string("unparseable record: ") + e.what());
            continue;
        }
        ++rep.records;
        const std::uint64_t seq = seq_of(rec);
        if (seq != expected) {
            finding(lineno, seq, "seq gap: expected " + std::to_string(expected) + ", found " +
                                     std::to_string(seq));
        }
        expected = seq + 1;

        if (const auto* w = std::get_if<WaveRecord>(&rec)) {
            for (const Assignment& a : w->assignments) {
                if (cohort_ids && !cohort_ids->count(a.patient_id)) {
                    finding(lineno, seq, "wave assigns unknown patient " + a.patient_id);
                }
                assigned.emplace(a.patient_id, a.annotator_id);
            }
        } else if (const auto* a = std::get_if<AnnotationRecord>(&rec)) {
            if (cohort_ids && !cohort_ids->count(a->patient_id)) {
                finding(lineno, seq, "annotation for unknown patient " + a->patient_id);
            }
            if (!assigned.count({a->patient_id, a->annotator_id})) {
                finding(lineno, seq, "annotation without an issued assignment (" + a->patient_id +
                                         ", " + a->annotator_id + ")");
            }
            if (!submitted.emplace(a->patient_id, a->annotator_id).second) {
                finding(lineno, seq, "duplicate annotation (" + a->patient_id + ", " +
                                         a->annotator_id + ")");
            }
            if (a->submitted_at < a->started_at) finding(lineno, seq, "submitted_at precedes started_at");
            annotation_patient.emplace(seq, a->patient_id);
        } else if (const auto* d = std::get_if<AdjudicationRecord>(&rec)) {
            if (!annotation_patient.count(d->supersedes_seq)) {
                finding(lineno, seq, "adjudication references unknown seq " +
                                         std::to_string(d->supersedes_seq));
            } else if (!adjudicated.insert(d->supersedes_seq).second) {
                finding(lineno, seq, "second adjudication for seq " + std::to_string(d->supersedes_seq));
            }
            if (d->label == Label::Unsure) finding(lineno, seq, "adjudicated label is unsure");
        }
    }
    return rep;
}

VerifyReport verify_log(const fs::path& path, const std::set<std::string>* cohort_ids) {
    return verify_log_text(read_file(path), cohort_ids);
}

// Snapshot ----------------------------------------------------------------------------------

std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("sha256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[digest[i] >> 4];
        out += hex[digest[i] & 0xF];
    }
    return out;
}

SessionSnapshot make_snapshot(const ValidationSession& session) {
    SessionSnapshot s;
    s.config = format_config(session.config());
    s.populations = session.frame().populations();
    s.drawn = session.frame().drawn_counts();
    s.phase = session.phase();
    s.posterior = session.posterior();
    s.waves = session.frame().waves_planned();
    s.log_records = session.log().size();
    std::string bytes;
    for (const LogRecord& r : session.log()) bytes += serialize_record(r) + '\n';
    s.log_sha256 = sha256_hex(bytes);
    return s;
}

Json to_json(const SessionSnapshot& s) {
    Json j;
    j["config"] = s.config;
    Json strata = Json::object();
    for (const Stratum st : kAllStrata) {
        strata[std::string(to_string(st))] = {{"population", s.populations[index_of(st)]},
                                              {"drawn", s.drawn[index_of(st)]}};
    }
    j["strata"] = std::move(strata);
    j["phase"] = to_string(s.phase);
    j["s"] = s.posterior.successes;
    j["k"] = s.posterior.trials;
    j["waves"] = s.waves;
    j["log_records"] = s.log_records;
    j["log_sha256"] = s.log_sha256;
    return j;
}

SessionSnapshot snapshot_from_json(const Json& j) {
    SessionSnapshot s;
    s.config = get_string(j, "config");
    const Json& strata = field(j, "strata");
    for (const Stratum st : kAllStrata) {
        const Json& e = field(strata, std::string(to_string(st)).c_str());
        s.populations[index_of(st)] = get_u64(e, "population");
        s.drawn[index_of(st)] = get_u64(e, "drawn");
    }
    s.phase = parse_phase(get_string(j, "phase"));
    s.posterior = {get_u64(j, "s"), get_u64(j, "k")};
    s.waves = static_cast<int>(get_u64(j, "waves"));
    s.log_records = get_u64(j, "log_records");
    s.log_sha256 = get_string(j, "log_sha256");
    return s;
}

bool snapshot_matches(const SessionSnapshot& s, const fs::path& log_path) {
    const std::string text = read_file(log_path);
    std::size_t pos = 0;
    for (std::size_t i = 0; i < s.log_records; ++i) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string::npos) return false;
        pos = nl + 1;
    }
    return sha256_hex(std::string_view(text).substr(0, pos)) == s.log_sha256;
}

} // namespace chartval
