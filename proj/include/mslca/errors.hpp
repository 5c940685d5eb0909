#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>

namespace mslca {

// Base for every error the library raises on purpose. Anything else escaping
// the library is a bug.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Shapes, indices or flags that do not fit the block structure.
class ShapeError : public Error {
public:
    using Error::Error;
};

class NotSymmetric : public Error {
public:
    using Error::Error;
};

class ConvergenceFailure : public Error {
public:
    using Error::Error;
};

// lambda_min <= cond_floor * lambda_max for a matrix that must be inverted.
// `block` is set when the offending matrix is a diagonal covariance block.
class NearSingular : public Error {
public:
    NearSingular(double lambda_min, double lambda_max, std::optional<std::size_t> block = {});

    double lambda_min() const noexcept { return lambda_min_; }
    double lambda_max() const noexcept { return lambda_max_; }
    std::optional<std::size_t> block() const noexcept { return block_; }

private:
    double lambda_min_;
    double lambda_max_;
    std::optional<std::size_t> block_;
};

class InsufficientSample : public Error {
public:
    using Error::Error;
};

class RepeatedEigenvalues : public Error {
public:
    using Error::Error;
};

class NegativeWeight : public Error {
public:
    using Error::Error;
};

class NuTooSmall : public Error {
public:
    using Error::Error;
};

// Unreadable or malformed input files and flags.
class InputError : public Error {
public:
    using Error::Error;
};

// A simulation plan that parses but violates an experiment precondition.
class PlanError : public Error {
public:
    using Error::Error;
};

}  // namespace mslca
