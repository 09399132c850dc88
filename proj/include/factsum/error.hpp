#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace factsum {

// Error taxonomy used across the project. Validation/Config/Format map to
// CLI exit code 1, everything else to 2.
enum class ErrorKind {
    Validation,
    Config,
    Format,
    Transport,
    Parse,
    Generation,
    Divergence,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string message, std::string detail = {})
        : std::runtime_error(std::move(message)), kind_(kind), detail_(std::move(detail)) {}

    ErrorKind kind() const noexcept { return kind_; }

    // Extra payload: raw responses for parse errors, step diagnostics for
    // divergence errors, offending field for format errors.
    const std::string& detail() const noexcept { return detail_; }

    bool is_usage_failure() const noexcept {
        return kind_ == ErrorKind::Validation || kind_ == ErrorKind::Config ||
               kind_ == ErrorKind::Format;
    }

private:
    ErrorKind kind_;
    std::string detail_;
};

[[noreturn]] inline void throw_validation(std::string msg, std::string detail = {}) {
    throw Error(ErrorKind::Validation, std::move(msg), std::move(detail));
}
[[noreturn]] inline void throw_config(std::string msg, std::string detail = {}) {
    throw Error(ErrorKind::Config, std::move(msg), std::move(detail));
}

} // namespace factsum
