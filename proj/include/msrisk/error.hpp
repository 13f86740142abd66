#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace msrisk {

enum class ErrorCode {
  InvalidArgument,
  NotPositiveDefinite,
  NumericalFailure,
  DegenerateState,
  FitFailure,
  UnsupportedDimension,
  DivergentTail,
  Underflow,
  BracketFailure,
  InfeasibleSlab,
  IncompleteTable,
  InsufficientData,
  Io,
  MalformedCsv,
  MissingColumn,
  MissingValue,
  NonMonotoneDates,
  BadConfig,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::NotPositiveDefinite: return "not-positive-definite";
    case ErrorCode::NumericalFailure: return "numerical-failure";
    case ErrorCode::DegenerateState: return "degenerate-state";
    case ErrorCode::FitFailure: return "fit-failure";
    case ErrorCode::UnsupportedDimension: return "unsupported-dimension";
    case ErrorCode::DivergentTail: return "divergent-tail";
    case ErrorCode::Underflow: return "underflow";
    case ErrorCode::BracketFailure: return "bracket-failure";
    case ErrorCode::InfeasibleSlab: return "infeasible-slab";
    case ErrorCode::IncompleteTable: return "incomplete-table";
    case ErrorCode::InsufficientData: return "insufficient-data";
    case ErrorCode::Io: return "io";
    case ErrorCode::MalformedCsv: return "malformed-csv";
    case ErrorCode::MissingColumn: return "missing-column";
    case ErrorCode::MissingValue: return "missing-value";
    case ErrorCode::NonMonotoneDates: return "non-monotone-dates";
    case ErrorCode::BadConfig: return "bad-config";
  }
  return "unknown";
}

/// Every failure raised by the library carries a machine-readable code; the
/// CLI maps codes to stable exit statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) fail(code, what);
}

}  // namespace msrisk
