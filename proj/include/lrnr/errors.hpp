#pragma once

#include <stdexcept>
#include <string>

namespace lrnr {

// Error categories map onto CLI exit codes: usage/config -> 1, data -> 2,
// numeric -> 3.
enum class ErrorKind {
  InvalidInput,
  SingularSystem,
  NumericOverflow,
  DegenerateBasis,
  UnsupportedOperation,
  FormatError,
  VersionMismatch,
  ShapeMismatch,
  TruncatedFile,
  ConfigError,
  IoError,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class InvalidInput : public Error {
 public:
  explicit InvalidInput(const std::string& what)
      : Error(ErrorKind::InvalidInput, what) {}
};

class SingularSystem : public Error {
 public:
  SingularSystem(const std::string& what, double condition)
      : Error(ErrorKind::SingularSystem, what), condition_(condition) {}

  double condition() const noexcept { return condition_; }

 private:
  double condition_;
};

class NumericOverflow : public Error {
 public:
  explicit NumericOverflow(const std::string& what)
      : Error(ErrorKind::NumericOverflow, what) {}
};

class DegenerateBasis : public Error {
 public:
  explicit DegenerateBasis(const std::string& what)
      : Error(ErrorKind::DegenerateBasis, what) {}
};

class UnsupportedOperation : public Error {
 public:
  explicit UnsupportedOperation(const std::string& what)
      : Error(ErrorKind::UnsupportedOperation, what) {}
};

/// Exit code for the command line front end.
int exit_code_for(ErrorKind kind);

}  // namespace lrnr
