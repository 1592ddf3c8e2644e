#include "pmdlab/error.hpp"

namespace pmdlab {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::NonStochasticRow: return "NonStochasticRow";
        case ErrorKind::RewardOutOfBound: return "RewardOutOfBound";
        case ErrorKind::BadGamma: return "BadGamma";
        case ErrorKind::InvalidBranching: return "InvalidBranching";
        case ErrorKind::InvalidSlip: return "InvalidSlip";
        case ErrorKind::GoalOutOfGrid: return "GoalOutOfGrid";
        case ErrorKind::NotADistribution: return "NotADistribution";
        case ErrorKind::SupportMismatch: return "SupportMismatch";
        case ErrorKind::ShapeMismatch: return "ShapeMismatch";
        case ErrorKind::TauNonPositive: return "TauNonPositive";
        case ErrorKind::MaxIterExceeded: return "MaxIterExceeded";
        case ErrorKind::EmptyStack: return "EmptyStack";
        case ErrorKind::NonFiniteLogits: return "NonFiniteLogits";
        case ErrorKind::VariantMismatch: return "VariantMismatch";
        case ErrorKind::ActionSpaceTooLarge: return "ActionSpaceTooLarge";
        case ErrorKind::EpsOutOfRange: return "EpsOutOfRange";
        case ErrorKind::EmptyBuffer: return "EmptyBuffer";
        case ErrorKind::UnknownKey: return "UnknownKey";
        case ErrorKind::TypeError: return "TypeError";
        case ErrorKind::MissingRequired: return "MissingRequired";
        case ErrorKind::IoError: return "IoError";
        case ErrorKind::ParseError: return "ParseError";
    }
    return "Unknown";
}

}  // namespace pmdlab
