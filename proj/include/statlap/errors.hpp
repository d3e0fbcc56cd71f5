#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace statlap {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class SingularMetric : public Error {
public:
    SingularMetric(std::size_t node, double condition_estimate);

    std::size_t node() const { return node_; }
    double condition_estimate() const { return condition_; }

private:
    std::size_t node_;
    double condition_;
};

class ShapeMismatch : public Error {
public:
    using Error::Error;
};

class NoClosedForm : public Error {
public:
    using Error::Error;
};

class ParameterOutOfRange : public Error {
public:
    using Error::Error;
};

// Raised when two algebraically equivalent discretizations drift apart by
// more than their truncation error allows.
class InternalInconsistency : public Error {
public:
    using Error::Error;
};

class ConvergenceFailure : public Error {
public:
    ConvergenceFailure(const std::string& what, int iterations, double residual)
        : Error(what), iterations_(iterations), residual_(residual) {}

    int iterations() const { return iterations_; }
    double residual() const { return residual_; }

private:
    int iterations_;
    double residual_;
};

class FormMismatch : public Error {
public:
    using Error::Error;
};

class ZeroEvidence : public Error {
public:
    using Error::Error;
};

class PosteriorUnderResolved : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace statlap
