#include "chartval/service.hpp"

#include "chartval/error.hpp"

#include <fstream>
#include <mutex>
#include <random>
#include <sstream>

namespace chartval {

namespace fs = std::filesystem;

std::string_view to_string(Role r) noexcept {
    switch (r) {
    case Role::Annotator: return "annotator";
    case Role::Adjudicator: return "adjudicator";
    case Role::Operator: return "operator";
    }
    return "?";
}

Role parse_role(std::string_view text) {
    for (const Role r : {Role::Annotator, Role::Adjudicator, Role::Operator}) {
        if (to_string(r) == text) return r;
    }
    throw ParseError("unknown role '" + std::string(text) + "'");
}

void TokenTable::add(std::string token, Principal who) {
    if (token.empty()) throw ParseError("empty token");
    if (!by_token_.emplace(std::move(token), std::move(who)).second) throw ParseError("duplicate token");
}

const Principal* TokenTable::find(std::string_view token) const {
    const auto it = by_token_.find(token);
    return it == by_token_.end() ? nullptr : &it->second;
}

TokenTable TokenTable::parse(std::istream& in) {
    TokenTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string token, role, user;
        if (!(ls >> token >> role >> user)) throw ParseError("expected '<token> <role> <user_id>'", lineno);
        try {
            t.add(token, {user, parse_role(role)});
        } catch (const ParseError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    return t;
}

TokenTable TokenTable::load(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    return parse(in);
}

void TokenTable::save(const fs::path& path) const {
    std::ostringstream out;
    out << "# token role user_id\n";
    for (const auto& [token, who] : by_token_) {
        out << token << ' ' << to_string(who.role) << ' ' << who.user_id << '\n';
    }
    write_file(path, out.str());
    fs::permissions(path, fs::perms::owner_read | fs::perms::owner_write);
}

TokenTable TokenTable::generate(const SessionConfig& config) {
    std::random_device rd;
    const auto fresh = [&] {
        static constexpr char hex[] = "0123456789abcdef";
        std::string s;
        for (int i = 0; i < 32; ++i) s += hex[rd() & 0xF];
        return s;
    };
    TokenTable t;
    for (const std::string& a : config.annotators) t.add(fresh(), {a, Role::Annotator});
    t.add(fresh(), {"adjudicator", Role::Adjudicator});
    t.add(fresh(), {"operator", Role::Operator});
    return t;
}

std::vector<PatientEvidence> load_evidence(const SessionPaths& paths, const SessionConfig& config) {
    const auto cohort = load_cohort(paths.cohort()).items;
    std::set<std::string> ids;
    for (const PatientRecord& p : cohort) ids.insert(p.patient_id);
    const auto notes = load_notes(paths.notes(), &ids).items;
    const TermDictionary dict = load_dictionary(paths.dictionary());
    return derive_evidence(cohort, notes, dict, config.count_negated_mentions);
}

void SessionService::init(const fs::path& dir, const InitInputs& inputs) {
    const SessionPaths paths{dir};
    if (fs::exists(paths.config()) || fs::exists(paths.log())) {
        throw Error("session directory " + dir.string() + " already holds a session");
    }
    inputs.config.validate();
    const auto cohort = load_cohort(inputs.cohort).items;
    std::set<std::string> ids;
    for (const PatientRecord& p : cohort) ids.insert(p.patient_id);
    const auto notes = load_notes(inputs.notes, &ids).items;
    const TermDictionary dict = load_dictionary(inputs.dictionary);
    // Surfaces frame errors (missing outcome dates and the like) before anything is written.
    ValidationSession probe(derive_evidence(cohort, notes, dict, inputs.config.count_negated_mentions),
                            inputs.config);

    fs::create_directories(dir);
    write_cohort(paths.cohort(), cohort);
    write_notes(paths.notes(), notes);
    write_dictionary(paths.dictionary(), dict);
    write_file(paths.config(), format_config(inputs.config));
    TokenTable::generate(inputs.config).save(paths.tokens());
    write_file(paths.log(), "");
}

SessionService::SessionService(const fs::path& dir, ClockFn clock)
    : paths_{dir}, clock_(std::move(clock)) {
    if (!fs::exists(paths_.config())) throw Error("no session in " + dir.string());
    config_ = load_config(paths_.config());
    const auto cohort = load_cohort(paths_.cohort()).items;
    std::set<std::string> ids;
    for (const PatientRecord& p : cohort) ids.insert(p.patient_id);
    notes_ = load_notes(paths_.notes(), &ids).items;
    dictionary_ = load_dictionary(paths_.dictionary());
    for (std::size_t i = 0; i < notes_.size(); ++i) notes_by_patient_[notes_[i].patient_id].push_back(i);

    writer_ = std::make_unique<LogWriter>(paths_.log());
    recovered_tail_ = writer_->quarantined_tail();
    session_ = std::make_unique<ValidationSession>(ValidationSession::replay(
        derive_evidence(cohort, notes_, dictionary_, config_.count_negated_mentions), config_,
        writer_->recovered()));
    session_->set_sink([w = writer_.get()](const LogRecord& r) { w->append(r); });
    write_snapshot();
}

SessionService::~SessionService() = default;

Timestamp SessionService::now() const {
    if (clock_) return clock_();
    return std::chrono::floor<std::chrono::milliseconds>(Clock::now());
}

void SessionService::write_snapshot() const {
    write_file(paths_.snapshot(), to_json(make_snapshot(*session_)).dump(2) + "\n");
}

WaveRecord SessionService::next_wave() {
    std::unique_lock lock(mutex_);
    WaveRecord w = session_->next_batch(now());
    write_snapshot();
    return w;
}

AdvanceRecord SessionService::advance() {
    std::unique_lock lock(mutex_);
    AdvanceRecord r = session_->advance_wave();
    write_snapshot();
    return r;
}

AnnotationRecord SessionService::submit(AnnotationRecord record) {
    std::unique_lock lock(mutex_);
    const Timestamp t = now();
    return session_->submit_annotation(std::move(record), t);
}

AdjudicationRecord SessionService::adjudicate(AdjudicationRecord record) {
    std::unique_lock lock(mutex_);
    const Timestamp t = now();
    return session_->submit_adjudication(std::move(record), t);
}

namespace {

Json posterior_json(PosteriorState p, const StoppingRule& rule) {
    const StoppingDecision d = evaluate_stopping(p, rule);
    Json j;
    j["s"] = p.successes;
    j["k"] = p.trials;
    j["point_estimate"] = d.point_estimate ? Json(*d.point_estimate) : Json(nullptr);
    j["posterior_mean"] = d.posterior_mean;
    j["lower"] = d.interval.lower;
    j["upper"] = d.interval.upper;
    j["verdict"] = to_string(d.verdict);
    return j;
}

Json estimate_json(const MetricEstimate& m) {
    return {{"value", m.value}, {"lower", m.lower}, {"upper", m.upper}};
}

Json cell_json(double tp, double fp, double fn, double tn) {
    return {{"tp", tp}, {"fp", fp}, {"fn", fn}, {"tn", tn}};
}

Json condition_json(const std::optional<ConditionTiming>& c) {
    if (!c) return nullptr;
    return {{"charts", c->charts}, {"median_minutes", c->median}, {"min_minutes", c->min},
            {"max_minutes", c->max}};
}

} // namespace

Json SessionService::status() const {
    std::shared_lock lock(mutex_);
    const ValidationSession& s = *session_;
    Json j;
    j["phase"] = to_string(s.phase());
    j["wave"] = s.current_wave();
    j["wave_open"] = s.current_wave_open();
    j["posterior"] = posterior_json(s.posterior(), config_.stopping_rule());
    if (const auto& stop = s.stop()) {
        j["stop"] = {{"verdict", to_string(stop->verdict)},
                     {"pool_exhausted", stop->pool_exhausted},
                     {"wave_index", stop->wave_index},
                     {"charts_reviewed", stop->charts_reviewed},
                     {"s", stop->posterior.successes},
                     {"k", stop->posterior.trials}};
    } else {
        j["stop"] = nullptr;
    }
    Json strata = Json::object();
    for (const Stratum st : kAllStrata) {
        strata[std::string(to_string(st))] = {{"population", s.frame().population(st)},
                                              {"drawn", s.frame().drawn(st)}};
    }
    j["strata"] = std::move(strata);
    j["savings"] = to_json(s.savings());
    const auto k = s.agreement();
    j["agreement"] = k ? to_json(*k) : Json(nullptr);
    j["pending_adjudications"] = s.pending_adjudications();
    j["log_records"] = s.log().size();
    j["config"] = {{"batch_size", config_.batch_size},
                   {"claims_pos_quota", config_.claims_pos_quota},
                   {"claims_neg_quota", config_.claims_neg_quota},
                   {"threshold", config_.threshold},
                   {"alpha", config_.alpha},
                   {"kappa_threshold", config_.kappa_threshold},
                   {"training_batch", config_.training_batch},
                   {"window_days", config_.window_days}};
    return j;
}

std::vector<Assignment> SessionService::assignments(std::string_view annotator_id) const {
    std::shared_lock lock(mutex_);
    return session_->open_assignments(annotator_id);
}

ChartView SessionService::chart(std::string_view patient_id) const {
    std::shared_lock lock(mutex_);
    if (!session_->chart(patient_id)) {
        throw WorkflowError(WorkflowErrc::UnknownPatient,
                            "no issued chart for patient " + std::string(patient_id));
    }
    const PatientEvidence* p = session_->frame().find(patient_id);
    const DateRange window = session_->frame().review_window(*p);
    std::vector<ClinicalNote> notes;
    if (const auto it = notes_by_patient_.find(patient_id); it != notes_by_patient_.end()) {
        for (const std::size_t i : it->second) notes.push_back(notes_[i]);
    }
    return chart_view(notes, dictionary_, window);
}

std::vector<TrajectoryPoint> SessionService::trajectory() const {
    std::shared_lock lock(mutex_);
    return session_->trajectory();
}

PerformanceReport SessionService::report(std::string_view snapshot) const {
    std::shared_lock lock(mutex_);
    SampledLabels labels = session_->labels();
    std::string name = "full";
    if (snapshot == "at-stop") {
        const auto& stop = session_->stop();
        if (stop) {
            labels = stop->labels;
            name = "at-stop";
        } else {
            name = "current";
        }
    } else if (snapshot != "full") {
        throw ParseError("snapshot must be 'at-stop' or 'full'");
    }
    return performance_report(session_->frame().populations(), labels, config_.alpha,
                              {config_.bootstrap_replicates, config_.seed}, name);
}

std::optional<AgreementReport> SessionService::agreement() const {
    std::shared_lock lock(mutex_);
    return session_->agreement();
}

TimingSummary SessionService::timing() const {
    std::shared_lock lock(mutex_);
    return timing_summary(session_->timed_reviews());
}

SavingsReport SessionService::savings() const {
    std::shared_lock lock(mutex_);
    return session_->savings();
}

std::vector<std::uint64_t> SessionService::pending_adjudications() const {
    std::shared_lock lock(mutex_);
    return session_->pending_adjudications();
}

SessionState SessionService::state() const {
    std::shared_lock lock(mutex_);
    return session_->state();
}

std::vector<LogRecord> SessionService::log() const {
    std::shared_lock lock(mutex_);
    return session_->log();
}

ReplayOutput replay_session(const fs::path& dir, const fs::path& log) {
    const SessionPaths paths{dir};
    const SessionConfig config = load_config(paths.config());
    const LogContents contents = read_log(log);
    const ValidationSession s =
        ValidationSession::replay(load_evidence(paths, config), config, contents.records);
    return {s.state(), s.trajectory(), s.savings(), s.stop()};
}

Json to_json(const PerformanceReport& r) {
    Json j;
    j["snapshot"] = r.snapshot;
    j["alpha"] = r.alpha;
    j["ppv"] = estimate_json(r.ppv);
    j["ppv_posterior_mean"] = r.ppv_posterior_mean;
    j["ppv_s"] = r.matrix.ppv_state.successes;
    j["ppv_k"] = r.matrix.ppv_state.trials;
    j["npv"] = estimate_json(r.npv);
    j["sensitivity"] = estimate_json(r.sensitivity);
    j["specificity"] = estimate_json(r.specificity);
    j["confusion"] = cell_json(r.matrix.tp, r.matrix.fp, r.matrix.fn, r.matrix.tn);
    Json by = Json::object();
    for (const Stratum s : kAllStrata) {
        const ConfusionCell& c = r.matrix.by_stratum[index_of(s)];
        by[std::string(to_string(s))] = cell_json(c.tp, c.fp, c.fn, c.tn);
    }
    j["by_stratum"] = std::move(by);
    j["bootstrap"] = {{"replicates", r.bootstrap_replicates}, {"skipped", r.bootstrap_skipped}};
    return j;
}

Json to_json(const AgreementReport& r) {
    return {{"n_double", r.n_double}, {"observed", r.observed}, {"expected", r.expected},
            {"kappa", r.kappa}, {"pass", r.pass}};
}

Json to_json(const TimingSummary& t) {
    Json j;
    j["with_highlights"] = condition_json(t.with_highlights);
    j["without_highlights"] = condition_json(t.without_highlights);
    if (t.paired) {
        j["paired"] = {{"charts", t.paired->charts},
                       {"median_with_minutes", t.paired->median_with},
                       {"median_without_minutes", t.paired->median_without},
                       {"reduction", t.paired->reduction}};
    } else {
        j["paired"] = nullptr;
    }
    return j;
}

Json to_json(const SavingsReport& s) {
    return {{"pool_total", s.pool_total},
            {"reviewed", s.reviewed},
            {"stopped_by_rule", s.stopped_by_rule},
            {"stop_wave", s.stop_wave ? Json(*s.stop_wave) : Json(nullptr)},
            {"savings", s.savings}};
}

Json to_json(const ChartView& v, std::string_view patient_id, bool highlights) {
    Json j;
    j["patient_id"] = patient_id;
    if (v.window) {
        j["review_window"] = {{"start", v.window->first.iso()}, {"end", v.window->last.iso()}};
    } else {
        j["review_window"] = nullptr;
    }
    j["highlights_enabled"] = highlights;
    Json notes = Json::array();
    for (const ChartNote& n : v.notes) {
        Json spans = Json::array();
        if (highlights) {
            for (const MatchSpan& s : n.spans) {
                spans.push_back({{"start", s.start}, {"end", s.end}, {"concept_id", s.concept_id},
                                 {"negated", s.negated}});
            }
        }
        notes.push_back({{"note_id", n.note.note_id}, {"date", n.note.date.iso()},
                         {"text", n.note.text}, {"spans", std::move(spans)}});
    }
    j["notes"] = std::move(notes);
    return j;
}

Json trajectory_json(const std::vector<TrajectoryPoint>& points) {
    Json arr = Json::array();
    for (const TrajectoryPoint& p : points) arr.push_back(to_json(p));
    return arr;
}

int status_for(const std::exception& e) noexcept {
    if (const auto* w = dynamic_cast<const WorkflowError*>(&e)) {
        switch (w->code()) {
        case WorkflowErrc::InvalidRecord: return 400;
        case WorkflowErrc::UnknownAssignment:
        case WorkflowErrc::UnknownPatient: return 404;
        case WorkflowErrc::DuplicateSubmission:
        case WorkflowErrc::WaveIncomplete:
        case WorkflowErrc::NoActiveWave: return 409;
        case WorkflowErrc::SessionStopped: return 423;
        }
    }
    if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const DomainError*>(&e) ||
        dynamic_cast<const nlohmann::json::exception*>(&e)) {
        return 400;
    }
    if (dynamic_cast<const UndefinedMetric*>(&e)) return 409;
    return 500;
}

} // namespace chartval
