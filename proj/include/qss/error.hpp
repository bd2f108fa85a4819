#pragma once

#include <stdexcept>
#include <string>

namespace qss {

/// Root of all library errors. Each subclass maps onto one CLI exit code.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or out-of-range input parameters (exit code 2).
class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& message, int line = 0)
        : Error(format(field, message, line)), field_(field), message_(message), line_(line) {}

    const std::string& field() const noexcept { return field_; }
    const std::string& message() const noexcept { return message_; }
    int line() const noexcept { return line_; }

private:
    static std::string format(const std::string& field, const std::string& message, int line) {
        std::string out;
        if (line > 0) out += "line " + std::to_string(line) + ": ";
        if (!field.empty()) out += field + ": ";
        return out + message;
    }

    std::string field_;
    std::string message_;
    int line_;
};

/// Input table or file does not follow the documented schema (exit code 2).
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Numerical failure: singular kernel, NaN, degenerate fit (exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

class SingularEvaluation : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ExtrapolationError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class DegenerateFit : public NumericalError {
public:
    using NumericalError::NumericalError;
};

class ConstraintInfeasible : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Two objects that must share a grid do not (exit code 3).
class GridMismatch : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// More than the tolerated fraction of mass fell outside a histogram grid (exit code 3).
class OutOfGrid : public NumericalError {
public:
    using NumericalError::NumericalError;
};

/// Required artifact absent from a run directory (exit code 4).
class MissingArtifact : public Error {
public:
    using Error::Error;
};

}  // namespace qss
