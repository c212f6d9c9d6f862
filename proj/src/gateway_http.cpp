#include "chartval/gateway.hpp"

#include "chartval/error.hpp"

#include <httplib.h>

namespace chartval {

namespace {

struct HttpError : Error {
    HttpError(int s, const std::string& what) : Error(what), status(s) {}
    int status;
};

void send_json(httplib::Response& res, const Json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, {{"error", message}, {"status", status}}, status);
}

Json parse_body(const httplib::Request& req) {
    Json j;
    try {
        j = Json::parse(req.body);
    } catch (const Json::exception& e) {
        throw HttpError(400, std::string("malformed JSON body: ") + e.what());
    }
    if (!j.is_object()) throw HttpError(400, "request body must be a JSON object");
    return j;
}

} // namespace

struct HttpGateway::Impl {
    SessionService& service;
    TokenTable tokens;
    httplib::Server server;

    Impl(SessionService& s, TokenTable t) : service(s), tokens(std::move(t)) {}

    const Principal& authenticate(const httplib::Request& req) const {
        const std::string header = req.get_header_value("Authorization");
        static constexpr std::string_view prefix = "Bearer ";
        if (header.compare(0, prefix.size(), prefix) != 0) {
            throw HttpError(401, "missing bearer token");
        }
        const Principal* who = tokens.find(std::string_view(header).substr(prefix.size()));
        if (!who) throw HttpError(401, "unknown bearer token");
        return *who;
    }

    static void require(const Principal& who, Role role) {
        if (who.role != role) {
            throw HttpError(403, std::string(to_string(role)) + " role required");
        }
    }

    // Wraps a handler with authentication and exception-to-status mapping.
    template <class Fn>
    httplib::Server::Handler guarded(Fn fn) {
        return [this, fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(authenticate(req), req, res);
            } catch (const HttpError& e) {
                send_error(res, e.status, e.what());
            } catch (const std::exception& e) {
                send_error(res, status_for(e), e.what());
            }
        };
    }

    void routes() {
        server.Get("/session", guarded([this](const Principal&, const httplib::Request&, httplib::Response& res) {
            send_json(res, service.status());
        }));

        server.Post("/waves/next", guarded([this](const Principal& who, const httplib::Request&, httplib::Response& res) {
            require(who, Role::Operator);
            send_json(res, to_json(LogRecord(service.next_wave())), 201);
        }));

        server.Post("/waves/advance", guarded([this](const Principal& who, const httplib::Request&, httplib::Response& res) {
            require(who, Role::Operator);
            send_json(res, to_json(LogRecord(service.advance())), 201);
        }));

        server.Get("/assignments", guarded([this](const Principal& who, const httplib::Request& req, httplib::Response& res) {
            std::string annotator = req.has_param("annotator") ? req.get_param_value("annotator") : who.user_id;
            if (who.role == Role::Annotator && annotator != who.user_id) {
                throw HttpError(403, "annotators may only list their own assignments");
            }
            Json arr = Json::array();
            for (const Assignment& a : service.assignments(annotator)) arr.push_back(to_json(a));
            send_json(res, arr);
        }));

        server.Get("/charts/:patient_id", guarded([this](const Principal&, const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.path_params.at("patient_id");
            const bool highlights = !(req.has_param("highlights") && req.get_param_value("highlights") == "0");
            send_json(res, to_json(service.chart(id), id, highlights));
        }));

        server.Post("/annotations", guarded([this](const Principal& who, const httplib::Request& req, httplib::Response& res) {
            require(who, Role::Annotator);
            Json body = parse_body(req);
            if (body.contains("seq")) throw HttpError(400, "seq is assigned by the server");
            body["type"] = "annotation";
            if (!body.contains("annotator_id")) body["annotator_id"] = who.user_id;
            if (!body.contains("submitted_at")) {
                body["submitted_at"] = format_timestamp(std::chrono::floor<std::chrono::milliseconds>(Clock::now()));
            }
            body.erase("received_at");
            auto rec = std::get<AnnotationRecord>(log_record_from_json(body));
            if (rec.annotator_id != who.user_id) {
                throw HttpError(403, "token does not belong to annotator " + rec.annotator_id);
            }
            send_json(res, to_json(LogRecord(service.submit(std::move(rec)))), 201);
        }));

        server.Post("/adjudications", guarded([this](const Principal& who, const httplib::Request& req, httplib::Response& res) {
            require(who, Role::Adjudicator);
            Json body = parse_body(req);
            if (body.contains("seq")) throw HttpError(400, "seq is assigned by the server");
            body["type"] = "adjudication";
            if (!body.contains("adjudicator_id")) body["adjudicator_id"] = who.user_id;
            body.erase("received_at");
            auto rec = std::get<AdjudicationRecord>(log_record_from_json(body));
            if (rec.adjudicator_id != who.user_id) {
                throw HttpError(403, "token does not belong to adjudicator " + rec.adjudicator_id);
            }
            send_json(res, to_json(LogRecord(service.adjudicate(std::move(rec)))), 201);
        }));

        server.Get("/adjudications/pending", guarded([this](const Principal&, const httplib::Request&, httplib::Response& res) {
            send_json(res, service.pending_adjudications());
        }));

        server.Get("/metrics/trajectory", guarded([this](const Principal&, const httplib::Request&, httplib::Response& res) {
            send_json(res, trajectory_json(service.trajectory()));
        }));

        server.Get("/metrics/report", guarded([this](const Principal&, const httplib::Request& req, httplib::Response& res) {
            const std::string snap = req.has_param("snapshot") ? req.get_param_value("snapshot") : "at-stop";
            send_json(res, to_json(service.report(snap)));
        }));

        server.Get("/metrics/timing", guarded([this](const Principal&, const httplib::Request&, httplib::Response& res) {
            send_json(res, to_json(service.timing()));
        }));

        server.Get("/agreement", guarded([this](const Principal&, const httplib::Request&, httplib::Response& res) {
            const auto a = service.agreement();
            send_json(res, a ? to_json(*a) : Json(nullptr));
        }));
    }
};

HttpGateway::HttpGateway(SessionService& service, TokenTable tokens)
    : impl_(std::make_unique<Impl>(service, std::move(tokens))) {
    impl_->routes();
}

HttpGateway::~HttpGateway() { stop(); }

int HttpGateway::bind(const std::string& host, int port) {
    if (port == 0) return impl_->server.bind_to_any_port(host);
    return impl_->server.bind_to_port(host, port) ? port : -1;
}

bool HttpGateway::run() { return impl_->server.listen_after_bind(); }

void HttpGateway::stop() {
    if (impl_) impl_->server.stop();
}

void HttpGateway::wait_until_ready() const { impl_->server.wait_until_ready(); }

std::pair<std::string, int> parse_address(const std::string& addr) {
    const std::size_t colon = addr.rfind(':');
    if (colon == std::string::npos) throw ParseError("address must be host:port");
    std::string host = addr.substr(0, colon);
    if (host.empty()) host = "0.0.0.0";
    int port = 0;
    try {
        std::size_t used = 0;
        port = std::stoi(addr.substr(colon + 1), &used);
        if (used != addr.size() - colon - 1) throw ParseError("bad port");
    } catch (const std::exception&) {
        throw ParseError("bad port in address '" + addr + "'");
    }
    if (port < 0 || port > 65535) throw ParseError("port out of range");
    return {host, port};
}

} // namespace chartval
