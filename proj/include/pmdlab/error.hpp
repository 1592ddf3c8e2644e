#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pmdlab {

enum class ErrorKind {
    InvalidArgument,
    NonStochasticRow,
    RewardOutOfBound,
    BadGamma,
    InvalidBranching,
    InvalidSlip,
    GoalOutOfGrid,
    NotADistribution,
    SupportMismatch,
    ShapeMismatch,
    TauNonPositive,
    MaxIterExceeded,
    EmptyStack,
    NonFiniteLogits,
    VariantMismatch,
    ActionSpaceTooLarge,
    EpsOutOfRange,
    EmptyBuffer,
    UnknownKey,
    TypeError,
    MissingRequired,
    IoError,
    ParseError,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Every failure raised by the library carries a machine-checkable kind.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Raised when a fixed-point iteration exhausts its budget.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& what, double residual, int iterations)
        : Error(ErrorKind::MaxIterExceeded, what), residual_(residual), iterations_(iterations) {}

    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

}  // namespace pmdlab
