#pragma once

#include <stdexcept>
#include <string>

namespace adadedup {

// Error codes surfaced verbatim in messages and CLI exit diagnostics.
enum class ErrorCode {
    BudgetOutOfRange,
    NonPositiveScale,
    AmbiguousBeta,
    BadMagic,
    TruncatedFile,
    NonFiniteValue,
    RaggedRows,
    EmptyFile,
    IoFailure,
    KTooLarge,
    DimensionMismatch,
    NegativeThreshold,
    TooLargeForExactCurve,
    MissingLoss,
    DuplicateLoss,
    NegativeLoss,
    InfeasibleBudget,
    NoSignal,
    EmptyKeptSet,
    NonPositiveBandwidth,
    DegenerateData,
    InvalidSpec,
    HashMismatch,
    UnknownKey,
};

inline const char* error_code_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::BudgetOutOfRange: return "BudgetOutOfRange";
        case ErrorCode::NonPositiveScale: return "NonPositiveScale";
        case ErrorCode::AmbiguousBeta: return "AmbiguousBeta";
        case ErrorCode::BadMagic: return "BadMagic";
        case ErrorCode::TruncatedFile: return "TruncatedFile";
        case ErrorCode::NonFiniteValue: return "NonFiniteValue";
        case ErrorCode::RaggedRows: return "RaggedRows";
        case ErrorCode::EmptyFile: return "EmptyFile";
        case ErrorCode::IoFailure: return "IoFailure";
        case ErrorCode::KTooLarge: return "KTooLarge";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NegativeThreshold: return "NegativeThreshold";
        case ErrorCode::TooLargeForExactCurve: return "TooLargeForExactCurve";
        case ErrorCode::MissingLoss: return "MissingLoss";
        case ErrorCode::DuplicateLoss: return "DuplicateLoss";
        case ErrorCode::NegativeLoss: return "NegativeLoss";
        case ErrorCode::InfeasibleBudget: return "InfeasibleBudget";
        case ErrorCode::NoSignal: return "NoSignal";
        case ErrorCode::EmptyKeptSet: return "EmptyKeptSet";
        case ErrorCode::NonPositiveBandwidth: return "NonPositiveBandwidth";
        case ErrorCode::DegenerateData: return "DegenerateData";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::HashMismatch: return "HashMismatch";
        case ErrorCode::UnknownKey: return "UnknownKey";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& detail)
        : std::runtime_error(std::string(error_code_name(code)) +
                             (detail.empty() ? "" : ": " + detail)),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// CLI exit code 2: bad run configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

// CLI exit code 3: malformed or unreadable input files.
class FormatError : public Error {
public:
    using Error::Error;
};

// CLI exit code 4: algorithmic precondition violated.
class PreconditionError : public Error {
public:
    using Error::Error;
};

}  // namespace adadedup
