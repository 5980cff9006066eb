#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace vcfl {

enum class ErrorCode {
  InvalidArgument,
  InvalidWorld,
  ZeroMarginal,
  AmbiguousClustering,
  SizeMismatch,
  RejectionExhausted,
  SolveFailed,
  NotACoarsening,
  DimensionMismatch,
  NonFinite,
  EmptyBatch,
  UnknownObservationalClass,
  InsufficientClasses,
  BadMagic,
  CountMismatch,
  TruncatedFile,
  InsufficientImages,
  UnknownExperiment,
  UnknownSession,
  DuplicateVote,
  BadLabel,
  NoDecidedLabels,
  Unauthorized,
  HashMismatch,
  Io,
  Parse,
};

std::string_view to_string(ErrorCode code);
/// Inverse of to_string; nullopt for unknown names.
std::optional<ErrorCode> parse_error_code(std::string_view name);

/// Every failure in the library surfaces as this exception; `code()` is the
/// machine-readable part, `what()` carries the diagnostics.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace vcfl
