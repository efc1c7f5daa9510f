#pragma once

#include <stdexcept>
#include <string>

namespace onehalf {

/// Base class for every failure raised by the toolkit.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Argument outside its documented domain (negative variance, even window, ...).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Two objects whose dimensions must agree do not.
class ShapeMismatch : public Error {
public:
    using Error::Error;
};

/// Malformed, truncated or corrupted input file / byte stream.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Solver hit its iteration cap before reaching the KKT tolerance.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, long iterations, double violation)
        : Error(what), iterations_(iterations), violation_(violation) {}

    long iterations() const noexcept { return iterations_; }
    double violation() const noexcept { return violation_; }

private:
    long iterations_;
    double violation_;
};

/// A pipeline stage failed; `stage()` names it.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}

    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Experiment configuration is invalid.
class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace onehalf
