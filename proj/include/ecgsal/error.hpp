#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ecgsal {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed text input. `line()` is 1-based, 0 when not line oriented.
class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error(line ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class UnsupportedFormatError : public Error {
public:
    using Error::Error;
};

class TruncatedInputError : public Error {
public:
    using Error::Error;
};

class UnexpectedEofError : public Error {
public:
    using Error::Error;
};

class InsufficientDataError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Caller broke an API precondition (non-scalar loss, reused tape, ...).
class ContractError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Batch-norm evaluation requested before any running statistics exist.
class StatisticsError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or parameter during optimisation.
class NumericError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

}  // namespace ecgsal
