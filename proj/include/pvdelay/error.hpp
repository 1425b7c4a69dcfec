#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pvdelay {

/// Failure categories surfaced by the library. The CLI maps these onto exit codes.
enum class ErrorKind {
  InvalidParam,
  DegenerateCurve,
  DimensionMismatch,
  SingularNetwork,
  SingularEquilibrium,
  SolverFailure,
  DelayFreeUnstable,
  NotCertifiedAtZero,
  StepTooLarge,
  BracketInvalid,
  ConfigError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace pvdelay
