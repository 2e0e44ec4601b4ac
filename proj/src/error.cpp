#include "mmglmm/error.hpp"

namespace mmglmm {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage: return "usage error";
    case ErrorKind::Io: return "i/o error";
    case ErrorKind::Schema: return "schema error";
    case ErrorKind::EmptyInput: return "empty-input error";
    case ErrorKind::Imputation: return "imputation error";
    case ErrorKind::NestingViolation: return "nesting-violation error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::UnknownColumn: return "unknown-column error";
    case ErrorKind::ImproperPrior: return "improper-prior error";
    case ErrorKind::NotPositiveDefinite: return "not-positive-definite error";
    case ErrorKind::MissingSlot: return "missing-slot error";
    case ErrorKind::ResponseSupport: return "response-support error";
    case ErrorKind::Design: return "design error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Assembly: return "assembly error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::StateCorruption: return "state-corruption error";
    case ErrorKind::Domain: return "domain error";
    case ErrorKind::UndefinedStatistic: return "undefined-statistic error";
    case ErrorKind::Support: return "support error";
    case ErrorKind::Comparison: return "comparison error";
    case ErrorKind::Prediction: return "prediction error";
  }
  return "error";
}

bool is_validation_error(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Io:
    case ErrorKind::Schema:
    case ErrorKind::EmptyInput:
    case ErrorKind::Config:
    case ErrorKind::UnknownColumn:
    case ErrorKind::ImproperPrior:
    case ErrorKind::MissingSlot:
    case ErrorKind::ResponseSupport:
      return true;
    default:
      return false;
  }
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

void fail(ErrorKind kind, const std::string& message) { throw Error(kind, message); }

}  // namespace mmglmm
