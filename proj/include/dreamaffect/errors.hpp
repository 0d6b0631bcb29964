#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace dreamaffect {

/// Bad input data: malformed records, unknown codes, inconsistent lengths.
/// The CLI maps this family to exit code 1.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}

  [[nodiscard]] std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class ValidationError : public DataError {
 public:
  using DataError::DataError;
};

/// Spearman on a constant (zero-variance) ranked vector.
class UndefinedCorrelation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A caller broke an operation's precondition (e.g. a multi-emotion report
/// reached the single-emotion evaluator).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace dreamaffect
