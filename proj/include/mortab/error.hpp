#pragma once

#include <stdexcept>
#include <string>

namespace mortab {

/// Base of every error raised by the library. The message is prefixed with
/// the originating module, e.g. "[closure] missing hazard at age 79".
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string &what)
        : std::runtime_error("[" + module + "] " + what), module_(std::move(module)), detail_(what) {}

    const std::string &module() const noexcept { return module_; }
    /// Message without the module prefix.
    const std::string &detail() const noexcept { return detail_; }

    /// Process exit code for the CLI: 1 numeric failure, 2 input/validation.
    virtual int exit_code() const noexcept = 0;

private:
    std::string module_;
    std::string detail_;
};

/// Bad input, bad file, bad argument: exit code 2.
class InputError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 2; }
};

/// The numerics ran but could not deliver (non-convergence, infeasibility): exit code 1.
class NumericError : public Error {
public:
    using Error::Error;
    int exit_code() const noexcept override { return 1; }
};

class DomainError : public InputError {
public:
    using InputError::InputError;
};

class ValidationError : public InputError {
public:
    using InputError::InputError;
};

class ShapeError : public InputError {
public:
    using InputError::InputError;
};

class CoverageError : public InputError {
public:
    using InputError::InputError;
};

class IoError : public InputError {
public:
    using InputError::InputError;
};

class InfiniteHazardError : public DomainError {
public:
    using DomainError::DomainError;
};

class ClosureError : public InputError {
public:
    using InputError::InputError;
};

class FitError : public InputError {
public:
    using InputError::InputError;
};

class NormalizationError : public NumericError {
public:
    using NumericError::NumericError;
};

class ProjectionRequiredError : public CoverageError {
public:
    using CoverageError::CoverageError;
};

class UnsupportedProvenanceError : public InputError {
public:
    using InputError::InputError;
};

class ConvergenceError : public NumericError {
public:
    ConvergenceError(std::string module, const std::string &what, double last_score_norm)
        : NumericError(std::move(module), what), last_score_norm_(last_score_norm) {}

    double last_score_norm() const noexcept { return last_score_norm_; }

private:
    double last_score_norm_;
};

class InfeasibleError : public NumericError {
public:
    using NumericError::NumericError;
};

} // namespace mortab
