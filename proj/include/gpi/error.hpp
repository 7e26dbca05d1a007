#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gpi {

/// Failure categories shared by every module. The CLI maps all of them to
/// exit code 4 except the usage-type kinds.
enum class ErrorKind {
    NotPositiveDefinite,
    SingularBlock,
    DimensionMismatch,
    InvalidPartition,
    GenerationExhausted,
    DomainError,
    DegreeTooLarge,
    InvalidSpec,
    BudgetExceeded,
    HypothesisViolated,
    PreconditionFailed,
    MomentDiverges,
    ConfigError,
    VersionMismatch,
    NotFound,
    ModeMixError,
    ParseError,
};

inline std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
        case ErrorKind::SingularBlock: return "SingularBlock";
        case ErrorKind::DimensionMismatch: return "DimensionMismatch";
        case ErrorKind::InvalidPartition: return "InvalidPartition";
        case ErrorKind::GenerationExhausted: return "GenerationExhausted";
        case ErrorKind::DomainError: return "DomainError";
        case ErrorKind::DegreeTooLarge: return "DegreeTooLarge";
        case ErrorKind::InvalidSpec: return "InvalidSpec";
        case ErrorKind::BudgetExceeded: return "BudgetExceeded";
        case ErrorKind::HypothesisViolated: return "HypothesisViolated";
        case ErrorKind::PreconditionFailed: return "PreconditionFailed";
        case ErrorKind::MomentDiverges: return "MomentDiverges";
        case ErrorKind::ConfigError: return "ConfigError";
        case ErrorKind::VersionMismatch: return "VersionMismatch";
        case ErrorKind::NotFound: return "NotFound";
        case ErrorKind::ModeMixError: return "ModeMixError";
        case ErrorKind::ParseError: return "ParseError";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace gpi
