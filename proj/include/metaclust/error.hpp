#pragma once

#include <stdexcept>
#include <string>

namespace metaclust {

// Base of every exception thrown by the library. The CLI maps the concrete
// kinds onto its exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operand shapes do not conform for the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Argument outside the mathematical domain of a primitive (log of a
// non-positive value, digamma at x <= 0, division by zero, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Caller violated a precondition (unnormalized rows, too few categories, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// A computation produced NaN or Inf.
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. `line()` is 1-based, 0 when not applicable.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line ? what + " (line " + std::to_string(line) + ")" : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Invalid run configuration (unknown key, out-of-range value).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Synthetic-data specification that cannot be realised.
class InfeasibleSpecError : public Error {
 public:
  using Error::Error;
};

// Model checkpoint incompatible with the supplied data.
class ModelMismatchError : public Error {
 public:
  using Error::Error;
};

}  // namespace metaclust
