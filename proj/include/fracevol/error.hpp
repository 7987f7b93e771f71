#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace fracevol {

/// Input outside the admissible range of an operation (e.g. Hurst outside (0,1)).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// A time requested by an operation is not a node of the driving path grid.
class AlignmentError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Symmetric factorization hit a non-positive pivot.
class FactorizationError : public std::runtime_error {
public:
    FactorizationError(std::size_t pivot, double value)
        : std::runtime_error("covariance factorization failed at pivot " + std::to_string(pivot) +
                             " (pivot value " + std::to_string(value) + ")"),
          pivot_(pivot), value_(value) {}

    std::size_t pivot() const noexcept { return pivot_; }
    double pivot_value() const noexcept { return value_; }

private:
    std::size_t pivot_;
    double value_;
};

/// Quadrature did not reach the requested tolerance.
class QuadratureError : public std::runtime_error {
public:
    QuadratureError(const std::string& what, double estimate)
        : std::runtime_error(what + " (error estimate " + std::to_string(estimate) + ")"),
          estimate_(estimate) {}

    double error_estimate() const noexcept { return estimate_; }

private:
    double estimate_;
};

/// Fixed-step integration or an iterative scheme could not meet its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, double estimate)
        : std::runtime_error(what + " (last estimate " + std::to_string(estimate) + ")"),
          estimate_(estimate) {}

    double estimate() const noexcept { return estimate_; }

private:
    double estimate_;
};

/// Invalid run configuration; the message names the offending key.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(const std::string& key, const std::string& why)
        : std::invalid_argument(key + ": " + why), key_(key) {}

    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

} // namespace fracevol
