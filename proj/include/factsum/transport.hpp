#pragma once

#include <string>

namespace factsum::transport {

// One line-delimited JSON request/response exchange. Endpoint descriptors:
//   "http://host:port[/path]"  — POST the request line as the body
//   "proc:<command and args>"  — spawn the command, write one line to its
//                                stdin, read one line from its stdout
// A timeout is a hard Transport error. FACTSUM_TIMEOUT_SECS overrides the
// configured timeout when set.
std::string call_endpoint(const std::string& endpoint, const std::string& request_line, double timeout_secs);

double effective_timeout(double configured_secs);

// FACTSUM_LLM_ENDPOINT wins over the configured endpoint when set.
std::string effective_llm_endpoint(const std::string& configured);

// Bounded-concurrency guard for external critic calls (default 4 in flight).
class InFlightGuard {
public:
    explicit InFlightGuard(int max_in_flight);
    ~InFlightGuard();
    InFlightGuard(const InFlightGuard&) = delete;
    InFlightGuard& operator=(const InFlightGuard&) = delete;
};

} // namespace factsum::transport
