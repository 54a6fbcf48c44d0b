#pragma once

#include <stdexcept>
#include <string>

namespace fsdc {

// Base of all library errors. The CLI maps the concrete subclasses to exit
// codes (config 2, data 3, numeric 4).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class DataError : public Error {
public:
    using Error::Error;
};

// Malformed token in a text input. Carries the 1-based line number.
class ParseError : public DataError {
public:
    ParseError(std::size_t line, const std::string& what)
        : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Well-formed tokens that break a structural rule (ordering, range, labels).
class ValidationError : public DataError {
public:
    using DataError::DataError;
};

class DimensionError : public DataError {
public:
    using DataError::DataError;
};

class NumericError : public Error {
public:
    using Error::Error;
};

// A pipeline failure tagged with the stage it happened in. Keeps the class of
// the original error reachable through `kind()` for exit-code mapping.
class StageError : public Error {
public:
    enum class Kind { config, data, numeric, other };
    StageError(std::string stage, Kind kind, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)), kind_(kind) {}
    const std::string& stage() const noexcept { return stage_; }
    Kind kind() const noexcept { return kind_; }

private:
    std::string stage_;
    Kind kind_;
};

}  // namespace fsdc
