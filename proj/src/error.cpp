#include "pvdelay/error.hpp"

namespace pvdelay {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidParam: return "InvalidParam";
    case ErrorKind::DegenerateCurve: return "DegenerateCurve";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::SingularNetwork: return "SingularNetwork";
    case ErrorKind::SingularEquilibrium: return "SingularEquilibrium";
    case ErrorKind::SolverFailure: return "SolverFailure";
    case ErrorKind::DelayFreeUnstable: return "DelayFreeUnstable";
    case ErrorKind::NotCertifiedAtZero: return "NotCertifiedAtZero";
    case ErrorKind::StepTooLarge: return "StepTooLarge";
    case ErrorKind::BracketInvalid: return "BracketInvalid";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace pvdelay
