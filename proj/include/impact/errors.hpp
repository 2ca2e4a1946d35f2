#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace impact {

// Failure classes. The CLI maps each to a distinct exit status.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input data or configuration.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Malformed ledger row; carries the 1-based line number.
class ParseError : public ValidationError {
public:
    ParseError(std::size_t line, const std::string& what)
        : ValidationError("line " + std::to_string(line) + ": " + what), line_(line), detail_(what) {}

    std::size_t line() const noexcept { return line_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::size_t line_;
    std::string detail_;
};

// A (segment, class) population whose impacts are all zero.
class DegenerateSegment : public ValidationError {
public:
    using ValidationError::ValidationError;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Singular systems, domain violations, exhausted retries.
class NumericalError : public Error {
public:
    using Error::Error;
};

class DomainError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace impact
