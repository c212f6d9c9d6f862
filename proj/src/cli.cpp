#include "chartval/gateway.hpp"

#include "chartval/error.hpp"
#include "chartval/simulator.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <fstream>
#include <functional>
#include <ostream>

namespace chartval {

namespace {

std::string fixed(double v, int digits = 4) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

std::string percent(double v) { return fixed(100.0 * v, 1) + "%"; }

std::string interval_text(const MetricEstimate& m) {
    return fixed(m.value) + " (" + fixed(m.lower) + ", " + fixed(m.upper) + ")";
}

struct Globals {
    std::string session_dir = ".";
    std::string format = "text";
    std::optional<std::uint64_t> seed;

    bool json() const { return format == "json"; }
};

void print_savings(std::ostream& out, const SavingsReport& s) {
    out << "pool " << s.pool_total << ", reviewed " << s.reviewed;
    if (s.stopped_by_rule) {
        out << ", stopped at wave " << *s.stop_wave << ", savings " << percent(s.savings) << '\n';
    } else {
        out << ", no stop, savings " << percent(0.0) << '\n';
    }
}

void print_trajectory(std::ostream& out, const std::vector<TrajectoryPoint>& points) {
    out << "wave  phase             s    k     ppv     lower   upper   verdict\n";
    for (const TrajectoryPoint& p : points) {
        char line[160];
        std::snprintf(line, sizeof line, "%4d  %-16s %4llu %4llu  %-7s %.4f  %.4f  %s\n", p.wave_index,
                      std::string(to_string(p.phase)).c_str(),
                      static_cast<unsigned long long>(p.posterior.successes),
                      static_cast<unsigned long long>(p.posterior.trials),
                      p.point_estimate ? fixed(*p.point_estimate).c_str() : "-", p.lower, p.upper,
                      p.stop_evaluated ? std::string(to_string(p.verdict)).c_str() : "-");
        out << line;
    }
}

void print_report(std::ostream& out, const PerformanceReport& r) {
    out << "snapshot     " << r.snapshot << '\n'
        << "PPV          " << interval_text(r.ppv) << "  s=" << r.matrix.ppv_state.successes
        << " k=" << r.matrix.ppv_state.trials << " posterior mean " << fixed(r.ppv_posterior_mean) << '\n'
        << "NPV          " << interval_text(r.npv) << '\n'
        << "sensitivity  " << interval_text(r.sensitivity) << '\n'
        << "specificity  " << interval_text(r.specificity) << '\n'
        << "weighted     tp=" << fixed(r.matrix.tp, 2) << " fp=" << fixed(r.matrix.fp, 2)
        << " fn=" << fixed(r.matrix.fn, 2) << " tn=" << fixed(r.matrix.tn, 2) << '\n'
        << "bootstrap    " << r.bootstrap_replicates << " replicates, " << r.bootstrap_skipped
        << " skipped\n";
}

void print_wave(std::ostream& out, const WaveRecord& w) {
    if (w.pool_exhausted) {
        out << "pool exhausted; session stopped\n";
        return;
    }
    out << "wave " << w.wave_index << " (" << to_string(w.phase) << "): " << w.draws.size() << " charts\n";
    for (const Assignment& a : w.assignments) out << "  " << a.patient_id << " -> " << a.annotator_id << '\n';
}

void print_advance(std::ostream& out, const AdvanceRecord& r) {
    out << "wave " << r.wave_index << " closed: " << to_string(r.phase_before) << " -> "
        << to_string(r.phase_after);
    if (r.kappa) out << ", kappa " << fixed(*r.kappa);
    if (r.stop_evaluated) out << ", verdict " << to_string(r.verdict);
    out << ", s=" << r.posterior.successes << " k=" << r.posterior.trials << '\n';
}

int cmd_init(const Globals& g, std::ostream& out, const std::string& cohort, const std::string& notes,
             const std::string& dictionary, const std::string& config_path,
             const std::vector<std::string>& settings) {
    SessionConfig cfg = config_path.empty() ? SessionConfig{} : load_config(config_path);
    for (const std::string& kv : settings) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) throw ParseError("--set expects key=value, got '" + kv + "'");
        apply_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (g.seed) cfg.seed = *g.seed;
    SessionService::init(g.session_dir, {cohort, notes, dictionary, cfg});
    const SessionPaths paths{g.session_dir};
    if (g.json()) {
        Json j;
        j["session_dir"] = g.session_dir;
        j["config"] = format_config(cfg);
        j["tokens"] = paths.tokens().string();
        out << j.dump(2) << '\n';
    } else {
        out << "initialized session in " << g.session_dir << '\n' << format_config(cfg)
            << "tokens written to " << paths.tokens().string() << '\n';
    }
    return 0;
}

int cmd_import(SessionService& svc, const Globals& g, std::ostream& out, std::ostream& err,
               const std::string& file) {
    std::ifstream in(file);
    if (!in) throw Error("cannot open " + file);
    std::string line;
    std::size_t lineno = 0, annotations = 0, adjudications = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            Json j = Json::parse(line);
            if (!j.is_object()) throw ParseError("record is not a JSON object");
            j.erase("seq");
            j.erase("received_at");
            const LogRecord rec = log_record_from_json(j);
            if (const auto* a = std::get_if<AnnotationRecord>(&rec)) {
                svc.submit(*a);
                ++annotations;
            } else if (const auto* d = std::get_if<AdjudicationRecord>(&rec)) {
                svc.adjudicate(*d);
                ++adjudications;
            } else {
                throw ParseError("only annotation and adjudication records can be imported");
            }
        } catch (const std::exception& e) {
            err << file << ":" << lineno << ": " << e.what() << '\n';
            err << "imported " << annotations << " annotations and " << adjudications
                << " adjudications before the error\n";
            return 1;
        }
    }
    if (g.json()) {
        out << Json{{"annotations", annotations}, {"adjudications", adjudications}}.dump(2) << '\n';
    } else {
        out << "imported " << annotations << " annotations and " << adjudications << " adjudications\n";
    }
    return 0;
}

int cmd_verify(const Globals& g, std::ostream& out, const std::string& log) {
    std::set<std::string> ids;
    const SessionPaths paths{g.session_dir};
    const bool have_cohort = std::filesystem::exists(paths.cohort());
    if (have_cohort) {
        for (const PatientRecord& p : load_cohort(paths.cohort()).items) ids.insert(p.patient_id);
    }
    const VerifyReport rep = verify_log(log, have_cohort ? &ids : nullptr);
    if (g.json()) {
        Json findings = Json::array();
        for (const LogFinding& f : rep.findings) {
            findings.push_back({{"line", f.line}, {"seq", f.seq}, {"message", f.message}});
        }
        out << Json{{"pass", rep.pass}, {"records", rep.records}, {"findings", findings}}.dump(2) << '\n';
    } else {
        out << (rep.pass ? "PASS" : "FAIL") << ": " << rep.records << " records\n";
        for (const LogFinding& f : rep.findings) {
            out << "  line " << f.line << " (seq " << f.seq << "): " << f.message << '\n';
        }
    }
    return rep.pass ? 0 : 1;
}

int cmd_replay(const Globals& g, std::ostream& out, const std::string& log) {
    const ReplayOutput r = replay_session(g.session_dir, log);
    if (g.json()) {
        Json j;
        j["trajectory"] = trajectory_json(r.trajectory);
        j["savings"] = to_json(r.savings);
        j["phase"] = to_string(r.state.phase);
        out << j.dump(2) << '\n';
    } else {
        print_trajectory(out, r.trajectory);
        print_savings(out, r.savings);
    }
    return 0;
}

int cmd_simulate(const Globals& g, std::ostream& out, const std::string& spec_path, bool sweep,
                 const std::string& csv_path) {
    SimulationPlan plan = load_simulation_plan(spec_path);
    if (g.seed) plan.seed = *g.seed;
    if (!sweep) plan.replicates = 1;
    SweepResult result;
    if (sweep) {
        result = sweep_experiment(plan);
    } else {
        const ReplicateInputs in = replicate_inputs(plan, 0, 0);
        result.runs.push_back(simulate_run(in.cohort, in.oracle, in.session));
        result.cells.push_back(summarize_cell(sweep_cells(plan)[0], result.runs));
    }
    if (!csv_path.empty()) {
        std::ofstream csv(csv_path);
        if (!csv) throw Error("cannot write " + csv_path);
        write_runs_csv(csv, result.runs);
    }
    if (g.json()) {
        out << (sweep ? format_summary_json(result) : format_run_json(result.runs[0])) << '\n';
        return 0;
    }
    if (!sweep) {
        const RunResult& r = result.runs[0];
        out << "verdict " << to_string(r.verdict);
        if (r.stop_wave) out << " at wave " << *r.stop_wave;
        out << ", reviewed " << r.reviewed << " of " << r.pool << ", savings " << percent(r.savings) << '\n';
        out << "at-stop PPV " << (r.at_stop_ppv ? fixed(*r.at_stop_ppv) : "-") << " (" << fixed(r.at_stop_lower)
            << ", " << fixed(r.at_stop_upper) << "), true PPV "
            << (r.truth.ppv ? fixed(*r.truth.ppv) : "-") << '\n';
        return 0;
    }
    out << "claims_ppv  size    runs  success futility none  savings  reviewed  coverage\n";
    for (const CellSummary& c : result.cells) {
        char line[200];
        std::snprintf(line, sizeof line, "%-10.3g %-7zu %-5zu %-7zu %-8zu %-5zu %-8s %-9.1f %s\n", c.cell.ppv,
                      c.cell.cohort_size, c.replicates, c.success, c.futility, c.no_stop,
                      percent(c.mean_savings).c_str(), c.mean_reviewed,
                      c.coverage_n ? fixed(c.coverage, 3).c_str() : "-");
        out << line;
    }
    return 0;
}

HttpGateway* g_serving = nullptr;

extern "C" void on_signal(int) {
    if (g_serving) g_serving->stop();
}

int cmd_serve(const Globals& g, std::ostream& out, const std::string& addr) {
    const auto [host, port] = parse_address(addr);
    SessionService svc(g.session_dir);
    HttpGateway gw(svc, TokenTable::load(svc.paths().tokens()));
    const int bound = gw.bind(host, port);
    if (bound < 0) throw Error("cannot bind " + addr);
    out << "listening on " << host << ':' << bound << std::endl;
    g_serving = &gw;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const bool ok = gw.run();
    g_serving = nullptr;
    return ok ? 0 : 1;
}

} // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Adaptive chart-validation workbench", "chartval"};
    app.require_subcommand(1);
    app.fallthrough();

    Globals g;
    app.add_option("--session-dir", g.session_dir, "Session directory")->envname("CHARTVAL_SESSION_DIR");
    app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"text", "json"}));
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Override the random seed");

    std::function<int()> action;
    const auto with_service = [&](std::function<int(SessionService&)> fn) {
        return [&, fn] {
            SessionService svc(g.session_dir);
            return fn(svc);
        };
    };

    auto* session = app.add_subcommand("session", "Create and drive a validation session");
    session->require_subcommand(1);

    std::string cohort, notes, dictionary, config_path;
    std::vector<std::string> settings;
    auto* init = session->add_subcommand("init", "Create a session directory");
    init->add_option("--cohort", cohort, "Cohort JSONL")->required()->check(CLI::ExistingFile);
    init->add_option("--notes", notes, "Notes JSONL")->required()->check(CLI::ExistingFile);
    init->add_option("--dictionary", dictionary, "Dictionary CSV")->required()->check(CLI::ExistingFile);
    init->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
    init->add_option("--set", settings, "Config override key=value");
    init->callback([&] {
        action = [&] { return cmd_init(g, out, cohort, notes, dictionary, config_path, settings); };
    });

    session->add_subcommand("status", "Show session state")->callback([&] {
        action = with_service([&](SessionService& svc) {
            const Json s = svc.status();
            if (g.json()) {
                out << s.dump(2) << '\n';
                return 0;
            }
            out << "phase        " << s["phase"].get<std::string>() << '\n'
                << "wave         " << s["wave"].get<int>() << (s["wave_open"].get<bool>() ? " (open)" : "") << '\n'
                << "posterior    s=" << s["posterior"]["s"] << " k=" << s["posterior"]["k"] << " interval ("
                << fixed(s["posterior"]["lower"].get<double>()) << ", "
                << fixed(s["posterior"]["upper"].get<double>()) << ")\n"
                << "stop         "
                << (s["stop"].is_null() ? std::string("none")
                                        : s["stop"]["verdict"].get<std::string>() + " at wave " +
                                              std::to_string(s["stop"]["wave_index"].get<int>()))
                << '\n';
            print_savings(out, svc.savings());
            return 0;
        });
    });

    session->add_subcommand("next-wave", "Issue the next batch of charts")->callback([&] {
        action = with_service([&](SessionService& svc) {
            const WaveRecord w = svc.next_wave();
            if (g.json()) out << to_json(LogRecord(w)).dump(2) << '\n';
            else print_wave(out, w);
            return 0;
        });
    });

    session->add_subcommand("advance", "Close the current wave")->callback([&] {
        action = with_service([&](SessionService& svc) {
            const AdvanceRecord r = svc.advance();
            if (g.json()) out << to_json(LogRecord(r)).dump(2) << '\n';
            else print_advance(out, r);
            return 0;
        });
    });

    auto* annotate = app.add_subcommand("annotate", "Label intake");
    annotate->require_subcommand(1);
    std::string import_file;
    auto* import = annotate->add_subcommand("import", "Submit annotation/adjudication records from JSONL");
    import->add_option("file", import_file)->required()->check(CLI::ExistingFile);
    import->callback([&] {
        action = with_service([&](SessionService& svc) { return cmd_import(svc, g, out, err, import_file); });
    });

    auto* metrics = app.add_subcommand("metrics", "Performance and agreement reports");
    metrics->require_subcommand(1);
    std::string snapshot = "at-stop";
    auto* report = metrics->add_subcommand("report", "Weighted PPV/NPV/sensitivity/specificity");
    report->add_option("--snapshot", snapshot)->check(CLI::IsMember({"at-stop", "full"}));
    report->callback([&] {
        action = with_service([&](SessionService& svc) {
            const PerformanceReport r = svc.report(snapshot);
            if (g.json()) out << to_json(r).dump(2) << '\n';
            else print_report(out, r);
            return 0;
        });
    });
    metrics->add_subcommand("trajectory", "Posterior after each wave")->callback([&] {
        action = with_service([&](SessionService& svc) {
            if (g.json()) out << trajectory_json(svc.trajectory()).dump(2) << '\n';
            else print_trajectory(out, svc.trajectory());
            return 0;
        });
    });
    metrics->add_subcommand("agreement", "Cohen's kappa over double-annotated charts")->callback([&] {
        action = with_service([&](SessionService& svc) {
            const auto a = svc.agreement();
            if (g.json()) {
                out << (a ? to_json(*a) : Json(nullptr)).dump(2) << '\n';
            } else if (!a) {
                out << "no double-annotated charts\n";
            } else {
                out << "charts " << a->n_double << ", p_o " << fixed(a->observed) << ", p_e "
                    << fixed(a->expected) << ", kappa " << fixed(a->kappa) << (a->pass ? " (pass)" : " (fail)")
                    << '\n';
            }
            return 0;
        });
    });
    metrics->add_subcommand("timing", "Annotation time with and without highlights")->callback([&] {
        action = with_service([&](SessionService& svc) {
            out << to_json(svc.timing()).dump(2) << '\n';
            return 0;
        });
    });

    std::string log_path;
    auto* replay = app.add_subcommand("replay", "Rebuild a session from a log and print its trajectory");
    replay->add_option("log", log_path)->required()->check(CLI::ExistingFile);
    replay->callback([&] { action = [&] { return cmd_replay(g, out, log_path); }; });

    auto* verify = app.add_subcommand("verify", "Check a log for integrity");
    verify->add_option("log", log_path)->required()->check(CLI::ExistingFile);
    verify->callback([&] { action = [&] { return cmd_verify(g, out, log_path); }; });

    auto* simulate = app.add_subcommand("simulate", "Synthetic-cohort experiments");
    simulate->require_subcommand(1);
    std::string spec_path, csv_path;
    auto* run = simulate->add_subcommand("run", "One simulated session");
    run->add_option("spec", spec_path)->required()->check(CLI::ExistingFile);
    run->add_option("--csv", csv_path, "Write the per-run row as CSV");
    run->callback([&] { action = [&] { return cmd_simulate(g, out, spec_path, false, csv_path); }; });
    auto* sweep = simulate->add_subcommand("sweep", "Replicated runs over a PPV / cohort-size grid");
    sweep->add_option("spec", spec_path)->required()->check(CLI::ExistingFile);
    sweep->add_option("--csv", csv_path, "Write one CSV row per replicate");
    sweep->callback([&] { action = [&] { return cmd_simulate(g, out, spec_path, true, csv_path); }; });

    std::string addr = "127.0.0.1:8080";
    auto* serve = app.add_subcommand("serve", "Serve the HTTP API for a session directory");
    serve->add_option("--addr", addr, "host:port");
    serve->callback([&] { action = [&] { return cmd_serve(g, out, addr); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }
    if (*seed_opt) g.seed = seed_value;

    try {
        return action ? action() : 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
}

} // namespace chartval
