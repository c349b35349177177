#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace bayesrisk {

// Every failure raised by the library carries one of these kinds. The CLI
// maps the kind's category onto its exit-code contract.
enum class ErrorKind {
  // usage errors
  UnknownKey,
  InvalidConfig,
  // data / input errors
  MalformedRow,
  NonMonotoneDates,
  EmptyFile,
  TooShort,
  Unsorted,
  EmptyPartition,
  Empty,
  SingleClass,
  LengthMismatch,
  DimensionMismatch,
  InconsistentCounts,
  SpanNotCovered,
  MalformedLine,
  IoFailure,
  Precondition,
  // numerical failures
  AllZeroWindow,
  NonFiniteObservation,
  DegenerateVariance,
  ChainDiverged,
  ConstraintViolated,
  NonFiniteLikelihood,
  OptimizationFailed,
  Diverged,
  NotPositiveDefinite,
  WeightCollapse,
  VersionUpdateFailed,
};

enum class ErrorCategory { Usage, Data, Numerical };

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownKey: return "UnknownKey";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::NonMonotoneDates: return "NonMonotoneDates";
    case ErrorKind::EmptyFile: return "EmptyFile";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::Unsorted: return "Unsorted";
    case ErrorKind::EmptyPartition: return "EmptyPartition";
    case ErrorKind::Empty: return "Empty";
    case ErrorKind::SingleClass: return "SingleClass";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::InconsistentCounts: return "InconsistentCounts";
    case ErrorKind::SpanNotCovered: return "SpanNotCovered";
    case ErrorKind::MalformedLine: return "MalformedLine";
    case ErrorKind::IoFailure: return "IoFailure";
    case ErrorKind::Precondition: return "Precondition";
    case ErrorKind::AllZeroWindow: return "AllZeroWindow";
    case ErrorKind::NonFiniteObservation: return "NonFiniteObservation";
    case ErrorKind::DegenerateVariance: return "DegenerateVariance";
    case ErrorKind::ChainDiverged: return "ChainDiverged";
    case ErrorKind::ConstraintViolated: return "ConstraintViolated";
    case ErrorKind::NonFiniteLikelihood: return "NonFiniteLikelihood";
    case ErrorKind::OptimizationFailed: return "OptimizationFailed";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorKind::WeightCollapse: return "WeightCollapse";
    case ErrorKind::VersionUpdateFailed: return "VersionUpdateFailed";
  }
  return "Unknown";
}

constexpr ErrorCategory category_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::UnknownKey:
    case ErrorKind::InvalidConfig:
      return ErrorCategory::Usage;
    case ErrorKind::AllZeroWindow:
    case ErrorKind::NonFiniteObservation:
    case ErrorKind::DegenerateVariance:
    case ErrorKind::ChainDiverged:
    case ErrorKind::ConstraintViolated:
    case ErrorKind::NonFiniteLikelihood:
    case ErrorKind::OptimizationFailed:
    case ErrorKind::Diverged:
    case ErrorKind::NotPositiveDefinite:
    case ErrorKind::WeightCollapse:
    case ErrorKind::VersionUpdateFailed:
      return ErrorCategory::Numerical;
    default:
      return ErrorCategory::Data;
  }
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  ErrorCategory category() const noexcept { return category_of(kind_); }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace bayesrisk
