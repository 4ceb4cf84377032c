#pragma once

#include <stdexcept>
#include <string>

namespace sct {

enum class ErrorKind { validation, numerical, io };

/// Base of every exception thrown by the library. The kind maps onto the
/// CLI exit codes (validation 2, numerical 3, I/O 4).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Invalid input: bad coordinates, parameters outside their domain, malformed config.
class DomainError : public Error {
 public:
  explicit DomainError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

/// Non-convergence, non-finite objective, failed factorization.
class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what) : Error(ErrorKind::numerical, what) {}
};

/// Cholesky failure after the jitter ladder was exhausted.
class ConditioningError : public NumericalError {
 public:
  explicit ConditioningError(const std::string& what) : NumericalError(what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return 2;
    case ErrorKind::numerical: return 3;
    case ErrorKind::io: return 4;
  }
  return 1;
}

}  // namespace sct
