#pragma once

// HTTP API and command-line front ends over SessionService.

#include "chartval/service.hpp"

#include <iosfwd>
#include <memory>
#include <string>

namespace chartval {

class HttpGateway {
public:
    HttpGateway(SessionService& service, TokenTable tokens);
    ~HttpGateway();
    HttpGateway(const HttpGateway&) = delete;
    HttpGateway& operator=(const HttpGateway&) = delete;

    /// Binds without serving; port 0 picks an ephemeral port. Returns the bound port, or -1.
    int bind(const std::string& host, int port);
    /// Serves until stop(); call after bind().
    bool run();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Parses `host:port` (host may be empty for 0.0.0.0).
std::pair<std::string, int> parse_address(const std::string& addr);

/// Entry point of the `chartval` tool. Returns the process exit status.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace chartval
