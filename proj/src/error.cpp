#include "vcfl/error.hpp"

namespace vcfl {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidWorld: return "InvalidWorld";
    case ErrorCode::ZeroMarginal: return "ZeroMarginal";
    case ErrorCode::AmbiguousClustering: return "AmbiguousClustering";
    case ErrorCode::SizeMismatch: return "SizeMismatch";
    case ErrorCode::RejectionExhausted: return "RejectionExhausted";
    case ErrorCode::SolveFailed: return "SolveFailed";
    case ErrorCode::NotACoarsening: return "NotACoarsening";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::UnknownObservationalClass: return "UnknownObservationalClass";
    case ErrorCode::InsufficientClasses: return "InsufficientClasses";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::TruncatedFile: return "TruncatedFile";
    case ErrorCode::InsufficientImages: return "InsufficientImages";
    case ErrorCode::UnknownExperiment: return "UnknownExperiment";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::DuplicateVote: return "DuplicateVote";
    case ErrorCode::BadLabel: return "BadLabel";
    case ErrorCode::NoDecidedLabels: return "NoDecidedLabels";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::HashMismatch: return "HashMismatch";
    case ErrorCode::Io: return "Io";
    case ErrorCode::Parse: return "Parse";
  }
  return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name) {
  for (int k = 0; k <= static_cast<int>(ErrorCode::Parse); ++k) {
    const auto code = static_cast<ErrorCode>(k);
    if (to_string(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace vcfl
