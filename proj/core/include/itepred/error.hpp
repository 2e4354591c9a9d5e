#pragma once

#include <stdexcept>
#include <string>

namespace itepred {

enum class ErrorCode {
  MissingValue,
  NonBinary,
  SchemaMismatch,
  IndexOutOfRange,
  HierarchyViolation,
  LengthMismatch,
  Separation,
  Singular,
  NoConvergence,
  NegativeStatistic,
  DegenerateFold,
  StrategyInfeasible,
  ColumnMismatch,
  TooFewSubjects,
  DegenerateNull,
  SingleClass,
  AllInBag,
  EmptyArmInGroup,
  EmptyCell,
  StudyAborted,
  NoRoot,
  InvalidSpec,
  IoError,
};

const char* error_code_name(ErrorCode code) noexcept;

/// Library-wide exception carrying a machine-checkable error code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace itepred
