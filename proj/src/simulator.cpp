#include "chartval/simulator.hpp"

#include "chartval/error.hpp"
#include "chartval/store.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>
#include <unordered_map>

namespace chartval {

namespace {

void check_probability(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError(std::string(name) + " must lie in [0,1]");
}

std::optional<double> ratio(std::size_t num, std::size_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

const Date kStudyStart(2016, 1, 1);
constexpr std::int32_t kStudyDays = 1096;

constexpr std::array<std::string_view, 4> kConcepts{"SH01", "SH02", "SH03", "SH04"};
constexpr std::array<std::string_view, 4> kTerms{"intentional overdose", "self-harm",
                                                 "suicide attempt", "self-inflicted laceration"};
constexpr std::array<std::string_view, 10> kFiller{
    "Vital signs stable.",
    "Follow-up scheduled in two weeks.",
    "Medication list reviewed with patient.",
    "Labs pending at time of discharge.",
    "Patient seen in clinic for routine care.",
    "Blood pressure well controlled.",
    "Discussed diet and exercise.",
    "Denies chest pain.",
    "Sleep has been poor this month.",
    "Family present during visit.",
};

std::string patient_name(std::size_t i) {
    std::string digits = std::to_string(i + 1);
    return "P" + std::string(digits.size() < 6 ? 6 - digits.size() : 0, '0') + digits;
}

struct NoteDraft {
    Date date;
    bool mention = false;
    bool negated = false;
};

std::string compose_text(const NoteDraft& d, Rng& rng) {
    std::vector<std::string> sentences;
    const std::size_t fill = 2 + rng.below(3);
    for (std::size_t i = 0; i < fill; ++i) sentences.emplace_back(kFiller[rng.below(kFiller.size())]);
    const auto insert = [&](std::string s) {
        const std::size_t at = rng.below(sentences.size() + 1);
        sentences.insert(sentences.begin() + static_cast<std::ptrdiff_t>(at), std::move(s));
    };
    if (d.mention) insert("Patient presented after " + std::string(kTerms[rng.below(kTerms.size())]) + ".");
    if (d.negated) insert("Patient denies " + std::string(kTerms[rng.below(kTerms.size())]) + ".");
    std::string text;
    for (const std::string& s : sentences) {
        if (!text.empty()) text += ' ';
        text += s;
    }
    return text;
}

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

template <class T>
std::string opt_cell(const std::optional<T>& v) {
    if (!v) return "";
    if constexpr (std::is_same_v<T, bool>) return *v ? "1" : "0";
    else return format_number(*v);
}

} // namespace

void SyntheticCohortSpec::validate() const {
    if (cohort_size < 1) throw DomainError("cohort_size must be >= 1");
    check_probability(prevalence, "prevalence");
    check_probability(claims_sensitivity, "claims_sensitivity");
    check_probability(claims_ppv, "claims_ppv");
    if (claims_false_positive_rate) check_probability(*claims_false_positive_rate, "claims_false_positive_rate");
    check_probability(reviewability, "reviewability");
    check_probability(term_emission_rate, "term_emission_rate");
    check_probability(false_mention_rate, "false_mention_rate");
    check_probability(negated_mention_rate, "negated_mention_rate");
    check_probability(death_record_rate, "death_record_rate");
    if (notes_min > notes_max) throw DomainError("notes_min exceeds notes_max");
    if (!(notes_mean >= static_cast<double>(notes_min) && notes_mean <= static_cast<double>(notes_max))) {
        throw DomainError("notes_mean must lie in [notes_min, notes_max]");
    }
    if (window_days < 0) throw DomainError("window_days must be >= 0");
}

OperatingPoint operating_point(const SyntheticCohortSpec& spec) {
    spec.validate();
    const double pi = spec.prevalence;
    const double se = spec.claims_sensitivity;
    const double ppv = spec.claims_ppv;
    OperatingPoint op;
    op.true_positive_rate = se;
    if (pi == 0.0) {
        op.false_positive_rate = spec.claims_false_positive_rate.value_or(0.0);
        return op;
    }
    if (ppv == 0.0) {
        if (se > 0.0) throw DomainError("infeasible operating point: PPV 0 needs sensitivity 0");
        op.false_positive_rate = spec.claims_false_positive_rate.value_or(0.0);
        return op;
    }
    if (pi == 1.0) {
        if (ppv < 1.0) throw DomainError("infeasible operating point: prevalence 1 forces PPV 1");
        return op;
    }
    // PPV = pi*se / (pi*se + (1-pi)*fpr)
    const double fpr = pi * se * (1.0 - ppv) / (ppv * (1.0 - pi));
    if (fpr > 1.0) {
        throw DomainError("infeasible operating point: PPV " + format_number(ppv) + " at sensitivity " +
                          format_number(se) + " and prevalence " + format_number(pi) +
                          " needs a false-positive rate of " + format_number(fpr));
    }
    op.false_positive_rate = fpr;
    return op;
}

TrueMetrics score_truth(const std::vector<TruthRow>& truth) {
    TrueMetrics m;
    for (const TruthRow& t : truth) {
        if (t.claims_positive) (t.outcome ? m.tp : m.fp)++;
        else (t.outcome ? m.fn : m.tn)++;
    }
    m.ppv = ratio(m.tp, m.tp + m.fp);
    m.npv = ratio(m.tn, m.tn + m.fn);
    m.sensitivity = ratio(m.tp, m.tp + m.fn);
    m.specificity = ratio(m.tn, m.tn + m.fp);
    return m;
}

TermDictionary synthetic_dictionary() {
    TermDictionary dict;
    for (std::size_t i = 0; i < kTerms.size(); ++i) dict.add(std::string(kConcepts[i]), kTerms[i]);
    return dict;
}

GeneratedCohort generate_cohort(const SyntheticCohortSpec& spec, const GenerateOptions& opts) {
    const OperatingPoint op = operating_point(spec);
    GeneratedCohort g;
    g.dictionary = synthetic_dictionary();
    g.records.reserve(spec.cohort_size);
    g.evidence.reserve(spec.cohort_size);
    g.truth.reserve(spec.cohort_size);

    // Evidence draws and text draws use separate streams so that emit_notes never changes
    // the cohort itself.
    Rng rng(spec.seed);
    Rng text_rng(derive_seed(spec.seed, 1));
    const std::int32_t w = spec.window_days;
    const std::size_t spread = spec.notes_max - spec.notes_min;
    const double note_p = spread == 0 ? 0.0
                                      : (spec.notes_mean - static_cast<double>(spec.notes_min)) /
                                            static_cast<double>(spread);
    const std::int32_t margin = std::min(w + 30, kStudyDays / 4);

    std::vector<NoteDraft> drafts;
    for (std::size_t i = 0; i < spec.cohort_size; ++i) {
        PatientRecord rec;
        rec.patient_id = patient_name(i);
        const bool outcome = rng.bernoulli(spec.prevalence);
        rec.claims_positive = rng.bernoulli(outcome ? op.true_positive_rate : op.false_positive_rate);
        if (rec.claims_positive) {
            rec.claims_outcome_date = kStudyStart + margin +
                static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(kStudyDays - 2 * margin)));
        }

        const std::size_t n_notes = spec.notes_min + rng.binomial(spread, note_p);
        drafts.clear();
        std::optional<Date> first_match;
        for (std::size_t k = 0; k < n_notes; ++k) {
            NoteDraft d;
            if (rec.claims_positive) {
                d.date = *rec.claims_outcome_date +
                         (static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(2 * w + 1))) - w);
            } else {
                d.date = kStudyStart + static_cast<std::int32_t>(rng.below(kStudyDays));
            }
            d.mention = rng.bernoulli(outcome ? spec.term_emission_rate : spec.false_mention_rate);
            d.negated = rng.bernoulli(spec.negated_mention_rate);
            if (d.mention || (opts.count_negated && d.negated)) {
                if (!first_match || d.date < *first_match) first_match = d.date;
            }
            drafts.push_back(d);
        }

        if (rec.claims_positive) {
            const Date center = *rec.claims_outcome_date;
            if (rng.bernoulli(spec.reviewability)) {
                const std::size_t m = 1 + rng.below(3);
                for (std::size_t k = 0; k < m; ++k) {
                    rec.healthcare_contact_dates.push_back(
                        center + (static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(2 * w + 1))) - w));
                }
            } else {
                const std::size_t m = rng.below(3);
                for (std::size_t k = 0; k < m; ++k) {
                    const auto off = w + 1 + static_cast<std::int32_t>(rng.below(365));
                    rec.healthcare_contact_dates.push_back(rng.bernoulli(0.5) ? center + off : center - off);
                }
            }
        } else {
            const std::size_t m = rng.below(4);
            for (std::size_t k = 0; k < m; ++k) {
                rec.healthcare_contact_dates.push_back(kStudyStart +
                                                       static_cast<std::int32_t>(rng.below(kStudyDays)));
            }
        }
        std::sort(rec.healthcare_contact_dates.begin(), rec.healthcare_contact_dates.end());

        const bool ehr = first_match.has_value();
        rec.death_record_suicide = outcome && !rec.claims_positive && !ehr &&
                                   rng.bernoulli(spec.death_record_rate);

        if (opts.emit_notes) {
            for (std::size_t k = 0; k < drafts.size(); ++k) {
                g.notes.push_back({rec.patient_id, rec.patient_id + "-N" + std::to_string(k + 1),
                                   drafts[k].date, compose_text(drafts[k], text_rng)});
            }
        }

        PatientEvidence e;
        e.patient_id = rec.patient_id;
        e.claims_positive = rec.claims_positive;
        e.claims_outcome_date = rec.claims_outcome_date;
        e.ehr_positive = ehr;
        e.first_match_date = first_match;
        e.death_record_suicide = rec.death_record_suicide;
        e.healthcare_contact_dates = rec.healthcare_contact_dates;
        g.evidence.push_back(std::move(e));
        g.truth.push_back({rec.patient_id, outcome, rec.claims_positive});
        g.records.push_back(std::move(rec));
    }
    g.true_metrics = score_truth(g.truth);
    return g;
}

void OracleAnnotator::validate() const {
    check_probability(error_rate, "oracle error_rate");
    check_probability(unsure_rate, "oracle unsure_rate");
}

RunResult simulate_run(const SyntheticCohortSpec& spec, const OracleAnnotator& oracle,
                       const SessionConfig& config) {
    const GeneratedCohort g =
        generate_cohort(spec, {.emit_notes = false, .count_negated = config.count_negated_mentions});
    return simulate_run(g, spec, oracle, config);
}

RunResult simulate_run(const GeneratedCohort& g, const SyntheticCohortSpec& spec,
                       const OracleAnnotator& oracle, const SessionConfig& config) {
    oracle.validate();
    std::unordered_map<std::string_view, bool> truth;
    truth.reserve(g.truth.size());
    for (const TruthRow& t : g.truth) truth.emplace(t.patient_id, t.outcome);

    ValidationSession session(g.evidence, config);
    Rng rng(oracle.seed);
    const auto answer = [&](bool outcome) {
        if (rng.bernoulli(oracle.unsure_rate)) return Label::Unsure;
        const bool flip = rng.bernoulli(oracle.error_rate);
        return (outcome != flip) ? Label::Positive : Label::Negative;
    };
    const auto truth_label = [&](const PatientId& id) {
        return truth.at(id) ? Label::Positive : Label::Negative;
    };

    Timestamp clock = parse_timestamp("2024-01-01T08:00:00.000Z");
    while (session.phase() != Phase::Stopped) {
        const WaveRecord wave = session.next_batch(clock);
        if (wave.pool_exhausted) break;
        for (const Assignment& a : wave.assignments) {
            AnnotationRecord r;
            r.wave_index = wave.wave_index;
            r.patient_id = a.patient_id;
            r.annotator_id = a.annotator_id;
            r.label = answer(truth.at(a.patient_id));
            r.started_at = clock;
            clock += std::chrono::minutes(4 + static_cast<int>(rng.below(9)));
            r.submitted_at = clock;
            r.highlights_enabled = a.highlights_enabled;
            session.submit_annotation(std::move(r), clock);
        }
        std::vector<PatientId> done;
        for (const std::uint64_t seq : session.pending_adjudications()) {
            const auto& ann = std::get<AnnotationRecord>(session.log()[seq - 1]);
            if (std::find(done.begin(), done.end(), ann.patient_id) != done.end()) continue;
            done.push_back(ann.patient_id);
            AdjudicationRecord adj;
            adj.supersedes_seq = seq;
            adj.label = truth_label(ann.patient_id);
            adj.adjudicator_id = "adjudicator";
            session.submit_adjudication(adj, clock);
        }
        session.advance_wave();
    }

    RunResult r;
    r.cohort_seed = spec.seed;
    r.cohort_size = spec.cohort_size;
    r.spec_ppv = spec.claims_ppv;
    r.truth = g.true_metrics;
    r.waves = session.current_wave();
    const SavingsReport sav = session.savings();
    r.pool = sav.pool_total;
    r.reviewed = sav.reviewed;
    r.savings = sav.savings;
    const auto& stop = session.stop();
    const bool by_rule = stop && stop->verdict != Verdict::Continue;
    if (by_rule) {
        r.verdict = stop->verdict;
        r.stop_wave = stop->wave_index;
        r.at_stop = stop->posterior;
    } else {
        r.at_stop = session.posterior();
    }
    const CredibleInterval ci = credible_interval(r.at_stop, config.alpha);
    r.at_stop_lower = ci.lower;
    r.at_stop_upper = ci.upper;
    if (r.at_stop.trials > 0) r.at_stop_ppv = point_estimate(r.at_stop);
    if (r.truth.ppv && r.at_stop.trials > 0) {
        r.covers = ci.lower <= *r.truth.ppv && *r.truth.ppv <= ci.upper;
    }

    const SampledLabels& labels = session.labels();
    r.charts_labeled = labels.claims_pos.size() + labels.claims_neg.size();
    try {
        const WeightedConfusionMatrix m = build_confusion(session.frame().populations(), labels);
        const auto attempt = [&](double (*fn)(const WeightedConfusionMatrix&)) -> std::optional<double> {
            try {
                return fn(m);
            } catch (const UndefinedMetric&) {
                return std::nullopt;
            }
        };
        r.est_ppv = attempt(&ppv);
        r.est_npv = attempt(&npv);
        r.est_sensitivity = attempt(&sensitivity);
        r.est_specificity = attempt(&specificity);
    } catch (const UndefinedMetric&) {
    }
    if (const auto k = session.agreement()) r.kappa = k->kappa;
    return r;
}

// Plans and sweeps --------------------------------------------------------------------------

SimulationPlan::SimulationPlan() {
    session.training_batch = 0;
    session.bootstrap_replicates = 0;
}

namespace {

std::string_view trim_view(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

template <class T>
T number(std::string_view key, std::string_view v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
        throw ParseError("bad value '" + std::string(v) + "' for " + std::string(key));
    }
    return out;
}

template <class T>
std::vector<T> number_list(std::string_view key, std::string_view v) {
    std::vector<T> out;
    std::size_t pos = 0;
    while (pos <= v.size()) {
        const std::size_t comma = v.find(',', pos);
        const std::size_t end = comma == std::string_view::npos ? v.size() : comma;
        out.push_back(number<T>(key, trim_view(v.substr(pos, end - pos))));
        pos = end + 1;
    }
    return out;
}

} // namespace

SimulationPlan parse_simulation_plan(std::istream& in) {
    SimulationPlan plan;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string_view l = trim_view(line);
        if (l.empty() || l.front() == '#') continue;
        const std::size_t eq = l.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key=value", lineno);
        const std::string_view key = trim_view(l.substr(0, eq));
        const std::string_view v = trim_view(l.substr(eq + 1));
        auto& c = plan.cohort;
        try {
            if (key == "cohort_size") c.cohort_size = number<std::size_t>(key, v);
            else if (key == "prevalence") c.prevalence = number<double>(key, v);
            else if (key == "claims_sensitivity") c.claims_sensitivity = number<double>(key, v);
            else if (key == "claims_ppv") c.claims_ppv = number<double>(key, v);
            else if (key == "claims_false_positive_rate") c.claims_false_positive_rate = number<double>(key, v);
            else if (key == "reviewability") c.reviewability = number<double>(key, v);
            else if (key == "term_emission_rate") c.term_emission_rate = number<double>(key, v);
            else if (key == "false_mention_rate") c.false_mention_rate = number<double>(key, v);
            else if (key == "negated_mention_rate") c.negated_mention_rate = number<double>(key, v);
            else if (key == "death_record_rate") c.death_record_rate = number<double>(key, v);
            else if (key == "notes_min") c.notes_min = number<std::size_t>(key, v);
            else if (key == "notes_max") c.notes_max = number<std::size_t>(key, v);
            else if (key == "notes_mean") c.notes_mean = number<double>(key, v);
            else if (key == "oracle_error_rate") plan.oracle.error_rate = number<double>(key, v);
            else if (key == "oracle_unsure_rate") plan.oracle.unsure_rate = number<double>(key, v);
            else if (key == "replicates") plan.replicates = number<std::size_t>(key, v);
            else if (key == "sweep_claims_ppv") plan.ppv_grid = number_list<double>(key, v);
            else if (key == "sweep_cohort_size") plan.size_grid = number_list<std::size_t>(key, v);
            else if (key == "threads") plan.threads = number<unsigned>(key, v);
            else if (key == "seed") plan.seed = number<std::uint64_t>(key, v);
            else if (key == "window_days") {
                c.window_days = number<std::int32_t>(key, v);
                plan.session.window_days = c.window_days;
            } else {
                apply_config_value(plan.session, key, v);
            }
        } catch (const ParseError& e) {
            throw ParseError(e.what(), lineno);
        }
    }
    if (plan.replicates < 1) throw ParseError("replicates must be >= 1");
    plan.cohort.validate();
    plan.oracle.validate();
    plan.session.validate();
    return plan;
}

SimulationPlan load_simulation_plan(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return parse_simulation_plan(in);
}

std::vector<SweepCell> sweep_cells(const SimulationPlan& plan) {
    const std::vector<double> ppvs = plan.ppv_grid.empty() ? std::vector<double>{plan.cohort.claims_ppv}
                                                           : plan.ppv_grid;
    const std::vector<std::size_t> sizes = plan.size_grid.empty()
                                               ? std::vector<std::size_t>{plan.cohort.cohort_size}
                                               : plan.size_grid;
    std::vector<SweepCell> cells;
    for (const double p : ppvs) {
        for (const std::size_t n : sizes) cells.push_back({p, n});
    }
    return cells;
}

ReplicateInputs replicate_inputs(const SimulationPlan& plan, std::size_t cell, std::size_t replicate) {
    const std::vector<SweepCell> cells = sweep_cells(plan);
    if (cell >= cells.size()) throw DomainError("sweep cell out of range");
    const std::uint64_t seed = derive_seed(derive_seed(plan.seed, cell), replicate);
    ReplicateInputs in{plan.cohort, plan.oracle, plan.session};
    in.cohort.claims_ppv = cells[cell].ppv;
    in.cohort.cohort_size = cells[cell].cohort_size;
    in.cohort.seed = seed;
    in.session.seed = derive_seed(seed, 1);
    in.session.window_days = in.cohort.window_days;
    in.oracle.seed = derive_seed(seed, 2);
    return in;
}

CellSummary summarize_cell(const SweepCell& cell, std::span<const RunResult> runs) {
    CellSummary s;
    s.cell = cell;
    s.replicates = runs.size();
    std::size_t covered = 0;
    const auto add = [](MeanError& e, const std::optional<double>& est, const std::optional<double>& truth) {
        if (!est || !truth) return;
        ++e.n;
        e.bias += *est - *truth;
        e.mean_abs_error += std::abs(*est - *truth);
    };
    for (const RunResult& r : runs) {
        ++s.stop_waves[r.stop_wave.value_or(0)];
        switch (r.verdict) {
        case Verdict::StopSuccess: ++s.success; break;
        case Verdict::StopFutility: ++s.futility; break;
        case Verdict::Continue: ++s.no_stop; break;
        }
        s.mean_savings += r.savings;
        s.mean_reviewed += static_cast<double>(r.reviewed);
        if (r.covers) {
            ++s.coverage_n;
            covered += *r.covers ? 1 : 0;
        }
        add(s.ppv, r.est_ppv, r.truth.ppv);
        add(s.npv, r.est_npv, r.truth.npv);
        add(s.sensitivity, r.est_sensitivity, r.truth.sensitivity);
        add(s.specificity, r.est_specificity, r.truth.specificity);
    }
    if (!runs.empty()) {
        s.mean_savings /= static_cast<double>(runs.size());
        s.mean_reviewed /= static_cast<double>(runs.size());
    }
    if (s.coverage_n > 0) s.coverage = static_cast<double>(covered) / static_cast<double>(s.coverage_n);
    for (MeanError* e : {&s.ppv, &s.npv, &s.sensitivity, &s.specificity}) {
        if (e->n > 0) {
            e->bias /= static_cast<double>(e->n);
            e->mean_abs_error /= static_cast<double>(e->n);
        }
    }
    return s;
}

SweepResult sweep_experiment(const SimulationPlan& plan) {
    if (plan.replicates < 1) throw DomainError("replicates must be >= 1");
    const std::vector<SweepCell> cells = sweep_cells(plan);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        const ReplicateInputs in = replicate_inputs(plan, c, 0);
        operating_point(in.cohort); // reject infeasible cells before any work
        in.oracle.validate();
        in.session.validate();
    }

    const std::size_t total = cells.size() * plan.replicates;
    SweepResult out;
    out.runs.resize(total);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    const auto worker = [&] {
        for (std::size_t i = next++; i < total; i = next++) {
            try {
                const ReplicateInputs in = replicate_inputs(plan, i / plan.replicates, i % plan.replicates);
                out.runs[i] = simulate_run(in.cohort, in.oracle, in.session);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = total;
            }
        }
    };
    unsigned n_threads = plan.threads ? plan.threads : std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, total));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (std::thread& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    for (std::size_t c = 0; c < cells.size(); ++c) {
        out.cells.push_back(summarize_cell(
            cells[c], std::span<const RunResult>(out.runs).subspan(c * plan.replicates, plan.replicates)));
    }
    return out;
}

// Output ------------------------------------------------------------------------------------

void write_runs_csv(std::ostream& out, std::span<const RunResult> runs) {
    out << "cohort_seed,cohort_size,spec_ppv,verdict,stop_wave,waves,pool,reviewed,savings,"
           "true_ppv,true_npv,true_sensitivity,true_specificity,at_stop_s,at_stop_k,at_stop_ppv,"
           "at_stop_lower,at_stop_upper,covers,est_ppv,est_npv,est_sensitivity,est_specificity,"
           "kappa\n";
    for (const RunResult& r : runs) {
        out << r.cohort_seed << ',' << r.cohort_size << ',' << format_number(r.spec_ppv) << ','
            << to_string(r.verdict) << ',' << (r.stop_wave ? std::to_string(*r.stop_wave) : "") << ','
            << r.waves << ',' << r.pool << ',' << r.reviewed << ',' << format_number(r.savings) << ','
            << opt_cell(r.truth.ppv) << ',' << opt_cell(r.truth.npv) << ','
            << opt_cell(r.truth.sensitivity) << ',' << opt_cell(r.truth.specificity) << ','
            << r.at_stop.successes << ',' << r.at_stop.trials << ',' << opt_cell(r.at_stop_ppv) << ','
            << format_number(r.at_stop_lower) << ',' << format_number(r.at_stop_upper) << ','
            << opt_cell(r.covers) << ',' << opt_cell(r.est_ppv) << ',' << opt_cell(r.est_npv) << ','
            << opt_cell(r.est_sensitivity) << ',' << opt_cell(r.est_specificity) << ','
            << opt_cell(r.kappa) << '\n';
    }
}

namespace {

Json opt_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

Json run_json(const RunResult& r) {
    Json j;
    j["cohort_seed"] = r.cohort_seed;
    j["cohort_size"] = r.cohort_size;
    j["spec_ppv"] = r.spec_ppv;
    j["verdict"] = to_string(r.verdict);
    j["stop_wave"] = r.stop_wave ? Json(*r.stop_wave) : Json(nullptr);
    j["waves"] = r.waves;
    j["pool"] = r.pool;
    j["reviewed"] = r.reviewed;
    j["savings"] = r.savings;
    j["truth"] = {{"ppv", opt_json(r.truth.ppv)},
                  {"npv", opt_json(r.truth.npv)},
                  {"sensitivity", opt_json(r.truth.sensitivity)},
                  {"specificity", opt_json(r.truth.specificity)}};
    j["at_stop"] = {{"s", r.at_stop.successes},
                    {"k", r.at_stop.trials},
                    {"ppv", opt_json(r.at_stop_ppv)},
                    {"lower", r.at_stop_lower},
                    {"upper", r.at_stop_upper},
                    {"covers", r.covers ? Json(*r.covers) : Json(nullptr)}};
    j["estimates"] = {{"ppv", opt_json(r.est_ppv)},
                      {"npv", opt_json(r.est_npv)},
                      {"sensitivity", opt_json(r.est_sensitivity)},
                      {"specificity", opt_json(r.est_specificity)}};
    j["kappa"] = opt_json(r.kappa);
    return j;
}

Json error_json(const MeanError& e) {
    return {{"n", e.n}, {"bias", e.bias}, {"mean_abs_error", e.mean_abs_error}};
}

} // namespace

std::string format_run_json(const RunResult& r) { return run_json(r).dump(2); }

std::string format_summary_json(const SweepResult& result) {
    Json cells = Json::array();
    for (const CellSummary& c : result.cells) {
        Json waves = Json::object();
        for (const auto& [w, n] : c.stop_waves) waves[w == 0 ? "none" : std::to_string(w)] = n;
        Json j;
        j["claims_ppv"] = c.cell.ppv;
        j["cohort_size"] = c.cell.cohort_size;
        j["replicates"] = c.replicates;
        j["stop_success"] = c.success;
        j["stop_futility"] = c.futility;
        j["no_stop"] = c.no_stop;
        j["stop_waves"] = std::move(waves);
        j["mean_savings"] = c.mean_savings;
        j["mean_reviewed"] = c.mean_reviewed;
        j["coverage"] = {{"n", c.coverage_n}, {"fraction", c.coverage}};
        j["error"] = {{"ppv", error_json(c.ppv)},
                      {"npv", error_json(c.npv)},
                      {"sensitivity", error_json(c.sensitivity)},
                      {"specificity", error_json(c.specificity)}};
        cells.push_back(std::move(j));
    }
    Json root;
    root["runs"] = result.runs.size();
    root["cells"] = std::move(cells);
    return root.dump(2);
}

} // namespace chartval
