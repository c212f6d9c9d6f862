#include "chartval/gateway.hpp"

#include "support/fixtures.hpp"

#include <doctest.h>
#include <httplib.h>

#include <thread>

using namespace chartval;
using fixture::TempDir;

namespace {

constexpr const char* kAnn1 = "tok-ann1";
constexpr const char* kAnn2 = "tok-ann2";
constexpr const char* kAdj = "tok-adj";
constexpr const char* kOps = "tok-ops";

TokenTable tokens() {
    TokenTable t;
    t.add(kAnn1, {"annotator1", Role::Annotator});
    t.add(kAnn2, {"annotator2", Role::Annotator});
    t.add(kAdj, {"lead", Role::Adjudicator});
    t.add(kOps, {"ops", Role::Operator});
    return t;
}

// Server on an ephemeral port for the lifetime of the object.
class Running {
public:
    explicit Running(const std::filesystem::path& dir)
        : service_(dir), gateway_(service_, tokens()) {
        port_ = gateway_.bind("127.0.0.1", 0);
        REQUIRE(port_ > 0);
        thread_ = std::thread([this] { gateway_.run(); });
        gateway_.wait_until_ready();
    }
    ~Running() {
        gateway_.stop();
        thread_.join();
    }
    httplib::Client client() const {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(30, 0);
        return c;
    }
    SessionService& service() { return service_; }

private:
    SessionService service_;
    HttpGateway gateway_;
    int port_ = -1;
    std::thread thread_;
};

httplib::Headers auth(const char* token) { return {{"Authorization", std::string("Bearer ") + token}}; }

const char* token_for(const std::string& annotator) {
    return annotator == "annotator1" ? kAnn1 : kAnn2;
}

Json post(httplib::Client& c, const char* token, const std::string& path, const Json& body, int want) {
    const auto res = c.Post(path, auth(token), body.dump(), "application/json");
    REQUIRE(res);
    INFO(path << " -> " << res->body);
    CHECK(res->status == want);
    return res->body.empty() ? Json() : Json::parse(res->body);
}

Json get(httplib::Client& c, const char* token, const std::string& path, int want = 200) {
    const auto res = c.Get(path, auth(token));
    REQUIRE(res);
    INFO(path << " -> " << res->body);
    CHECK(res->status == want);
    return Json::parse(res->body);
}

Json annotation_body(const Json& assignment, Label l) {
    return {{"patient_id", assignment.at("patient_id")},
            {"wave_index", assignment.at("wave_index")},
            {"label", std::string(to_string(l))},
            {"started_at", "2024-03-01T09:00:00.000Z"},
            {"submitted_at", "2024-03-01T09:06:00.000Z"}};
}

// Issues and completes one wave entirely over HTTP.
void http_wave(httplib::Client& c, fixture::Labeler& lab) {
    const Json wave = post(c, kOps, "/waves/next", Json::object(), 201);
    if (wave.at("pool_exhausted").get<bool>()) return;
    std::map<std::string, ChartDraw> draws;
    for (const Json& d : wave.at("draws")) {
        ChartDraw cd;
        cd.patient_id = d.at("patient_id");
        cd.stratum = parse_stratum(d.at("stratum").get<std::string>());
        draws.emplace(cd.patient_id, cd);
    }
    for (Json a : wave.at("assignments")) {
        a["wave_index"] = wave.at("wave_index");
        const std::string who = a.at("annotator_id");
        post(c, token_for(who), "/annotations",
             annotation_body(a, lab.label(draws.at(a.at("patient_id").get<std::string>()))), 201);
    }
    post(c, kOps, "/waves/advance", Json::object(), 201);
}

} // namespace

TEST_CASE("authentication and roles") {
    TempDir tmp("gw-auth");
    Running srv(fixture::make_session_dir(tmp.path()));
    auto c = srv.client();

    auto res = c.Get("/session");
    REQUIRE(res);
    CHECK(res->status == 401);
    CHECK(Json::parse(res->body).at("status") == 401);
    res = c.Get("/session", auth("nope"));
    CHECK(res->status == 401);

    post(c, kAnn1, "/waves/next", Json::object(), 403);
    post(c, kAdj, "/waves/advance", Json::object(), 403);
    const Json wave = post(c, kOps, "/waves/next", Json::object(), 201);
    CHECK(wave.at("type") == "wave");
    CHECK(wave.at("wave_index") == 1);

    get(c, kAnn1, "/assignments?annotator=annotator2", 403);
    const Json mine = get(c, kAnn1, "/assignments");
    CHECK(mine.size() == 10);
    for (const Json& a : mine) CHECK(a.at("annotator_id") == "annotator1");
    CHECK(get(c, kOps, "/assignments?annotator=annotator2").size() == 10);

    // annotators cannot post for someone else or adjudicate
    Json body = annotation_body(mine[0], Label::Positive);
    body["annotator_id"] = "annotator2";
    post(c, kAnn1, "/annotations", body, 403);
    post(c, kAnn1, "/adjudications", {{"supersedes_seq", 2}, {"label", "positive"}}, 403);
}

TEST_CASE("annotation intake status codes") {
    TempDir tmp("gw-codes");
    Running srv(fixture::make_session_dir(tmp.path()));
    auto c = srv.client();

    post(c, kOps, "/waves/advance", Json::object(), 409);
    post(c, kOps, "/waves/next", Json::object(), 201);
    post(c, kOps, "/waves/next", Json::object(), 409);
    const Json mine = get(c, kAnn1, "/assignments");

    Json with_seq = annotation_body(mine[0], Label::Positive);
    with_seq["seq"] = 5;
    post(c, kAnn1, "/annotations", with_seq, 400);

    Json backwards = annotation_body(mine[0], Label::Positive);
    backwards["submitted_at"] = "2024-03-01T08:00:00.000Z";
    post(c, kAnn1, "/annotations", backwards, 400);

    Json bad_label = annotation_body(mine[0], Label::Positive);
    bad_label["label"] = "perhaps";
    post(c, kAnn1, "/annotations", bad_label, 400);

    const auto res = c.Post("/annotations", auth(kAnn1), "{not json", "application/json");
    CHECK(res->status == 400);

    Json stranger = annotation_body(mine[0], Label::Positive);
    stranger["patient_id"] = "GA0000";
    post(c, kAnn1, "/annotations", stranger, 404);

    const Json ok = post(c, kAnn1, "/annotations", annotation_body(mine[0], Label::Positive), 201);
    CHECK(ok.at("seq") == 2);
    CHECK(ok.contains("received_at"));
    post(c, kAnn1, "/annotations", annotation_body(mine[0], Label::Positive), 409);
    post(c, kOps, "/waves/advance", Json::object(), 409);

    // a disagreement shows up as pending adjudication
    Json other = annotation_body(mine[0], Label::Negative);
    post(c, kAnn2, "/annotations", other, 201);
    const Json pending = get(c, kAdj, "/adjudications/pending");
    CHECK(pending.size() == 2);
    post(c, kAdj, "/adjudications", {{"supersedes_seq", 12345}, {"label", "positive"}}, 404);
    post(c, kAdj, "/adjudications", {{"supersedes_seq", pending[0]}, {"label", "unsure"}}, 400);
    const Json adj = post(c, kAdj, "/adjudications", {{"supersedes_seq", pending[0]}, {"label", "positive"}}, 201);
    CHECK(adj.at("adjudicator_id") == "lead");
    post(c, kAdj, "/adjudications", {{"supersedes_seq", pending[1]}, {"label", "positive"}}, 409);
    CHECK(get(c, kAdj, "/adjudications/pending").empty());
}

TEST_CASE("charts carry sorted notes and optional highlights") {
    TempDir tmp("gw-charts");
    Running srv(fixture::make_session_dir(tmp.path()));
    auto c = srv.client();
    get(c, kAnn1, "/charts/CP0000", 404);
    get(c, kAnn1, "/charts/no-such-patient", 404);

    const Json wave = post(c, kOps, "/waves/next", Json::object(), 201);
    std::string cp;
    for (const Json& d : wave.at("draws")) {
        if (d.at("stratum") == "ClaimsPos_Reviewable") cp = d.at("patient_id");
    }
    REQUIRE_FALSE(cp.empty());
    const Json chart = get(c, kAnn1, "/charts/" + cp);
    CHECK(chart.at("patient_id") == cp);
    const Json& notes = chart.at("notes");
    // the note 20 days before the outcome falls inside the 60-day window
    REQUIRE(notes.size() == 3);
    for (std::size_t i = 1; i < notes.size(); ++i) {
        CHECK(notes[i - 1].at("date").get<std::string>() <= notes[i].at("date").get<std::string>());
    }
    std::size_t spans = 0, negated = 0;
    for (const Json& n : notes) {
        for (const Json& s : n.at("spans")) {
            ++spans;
            negated += s.at("negated").get<bool>();
            const std::string text = n.at("text");
            CHECK(s.at("end").get<std::size_t>() <= text.size());
        }
    }
    CHECK(spans == 2);
    CHECK(negated == 1);

    const Json plain = get(c, kAnn1, "/charts/" + cp + "?highlights=0");
    CHECK_FALSE(plain.at("highlights_enabled").get<bool>());
    for (const Json& n : plain.at("notes")) CHECK(n.at("spans").empty());
}

TEST_CASE("a full session over HTTP matches replay of its log") {
    TempDir tmp("gw-full");
    const auto dir = fixture::make_session_dir(tmp.path());
    Json trajectory;
    {
        Running srv(dir);
        auto c = srv.client();
        CHECK(get(c, kOps, "/agreement").is_null());
        fixture::Labeler lab;
        for (int w = 0; w < 40; ++w) {
            if (get(c, kOps, "/session").at("phase") == "Stopped") break;
            http_wave(c, lab);
        }
        const Json status = get(c, kOps, "/session");
        CHECK(status.at("phase") == "Stopped");
        CHECK(status.at("stop").at("verdict") == "StopFutility");
        CHECK(status.at("stop").at("wave_index") == 12);
        CHECK(status.at("savings").at("reviewed") == 120);
        CHECK(get(c, kOps, "/session") == status);

        post(c, kOps, "/waves/next", Json::object(), 423);
        trajectory = get(c, kAnn1, "/metrics/trajectory");
        CHECK(trajectory.size() == 12);
        CHECK(get(c, kAnn1, "/metrics/trajectory") == trajectory);
        CHECK(get(c, kOps, "/agreement").at("kappa") == 1.0);

        const Json report = get(c, kOps, "/metrics/report");
        CHECK(report.at("snapshot") == "at-stop");
        get(c, kOps, "/metrics/report?snapshot=weird", 400);
        const Json timing = get(c, kOps, "/metrics/timing");
        CHECK(timing.at("with_highlights").at("charts") == 150);
    }
    const ReplayOutput replayed = replay_session(dir, SessionPaths{dir}.log());
    CHECK(trajectory_json(replayed.trajectory) == trajectory);
    REQUIRE(replayed.stop);
    CHECK(replayed.stop->wave_index == 12);
}
