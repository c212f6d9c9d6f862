#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace chartval {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid argument to a numerical routine (shape <= 0, p outside (0,1), ...).
class DomainError : public Error {
public:
    using Error::Error;
};

// A performance metric whose denominator is zero.
class UndefinedMetric : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// The annotation log cannot be replayed (seq gap, unknown patient, duplicate, draw mismatch).
class LogCorruption : public Error {
public:
    using Error::Error;
};

enum class WorkflowErrc {
    InvalidRecord,
    UnknownAssignment,
    UnknownPatient,
    DuplicateSubmission,
    SessionStopped,
    WaveIncomplete,
    NoActiveWave,
};

class WorkflowError : public Error {
public:
    WorkflowError(WorkflowErrc code, const std::string& what) : Error(what), code_(code) {}
    WorkflowErrc code() const noexcept { return code_; }

private:
    WorkflowErrc code_;
};

} // namespace chartval
