#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace phkit {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed expression source. `position` is a zero-based byte offset.
class ParseError : public Error {
 public:
  ParseError(const std::string& message, std::size_t position)
      : Error(message + " at index " + std::to_string(position)),
        position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class UndeclaredVariableError : public Error {
 public:
  explicit UndeclaredVariableError(const std::string& name)
      : Error("undeclared variable \"" + name + "\""), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

// Non-finite or out-of-domain evaluation (ln of a non-positive value,
// division by zero, overflow).
class DomainError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A caller violated an operation precondition (h <= 0, non-constant matrices
// where constants are required, non-skew input, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// A linear system has no solution (or the solution is not unique where
// uniqueness is required).
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

// A structural check failed; the message names the failing check.
class CheckFailure : public Error {
 public:
  CheckFailure(const std::string& check, double residual,
               const std::string& detail = {})
      : Error(check + " violated (residual " + std::to_string(residual) + ")" +
              (detail.empty() ? "" : ": " + detail)),
        check_(check),
        residual_(residual) {}
  const std::string& check() const { return check_; }
  double residual() const { return residual_; }

 private:
  std::string check_;
  double residual_;
};

}  // namespace phkit
