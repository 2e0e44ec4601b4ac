#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mmglmm {

// Every failure the library reports carries one of these kinds. The CLI maps
// input/validation kinds to exit status 1 and numeric/model kinds to 2.
enum class ErrorKind {
  Usage,
  Io,
  Schema,
  EmptyInput,
  Imputation,
  NestingViolation,
  Config,
  UnknownColumn,
  ImproperPrior,
  NotPositiveDefinite,
  MissingSlot,
  ResponseSupport,
  Design,
  Shape,
  Assembly,
  Numeric,
  StateCorruption,
  Domain,
  UndefinedStatistic,
  Support,
  Comparison,
  Prediction,
};

std::string_view to_string(ErrorKind kind);

// True for the kinds that are caught before any numeric work starts.
bool is_validation_error(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message);

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace mmglmm
