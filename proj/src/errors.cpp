#include "lrnr/errors.hpp"

namespace lrnr {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return "invalid-input";
    case ErrorKind::SingularSystem: return "singular-system";
    case ErrorKind::NumericOverflow: return "numeric-overflow";
    case ErrorKind::DegenerateBasis: return "degenerate-basis";
    case ErrorKind::UnsupportedOperation: return "unsupported-operation";
    case ErrorKind::FormatError: return "format-error";
    case ErrorKind::VersionMismatch: return "version-mismatch";
    case ErrorKind::ShapeMismatch: return "shape-mismatch";
    case ErrorKind::TruncatedFile: return "truncated-file";
    case ErrorKind::ConfigError: return "config-error";
    case ErrorKind::IoError: return "io-error";
  }
  return "unknown";
}

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidInput:
      return 1;
    case ErrorKind::FormatError:
    case ErrorKind::VersionMismatch:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::TruncatedFile:
    case ErrorKind::IoError:
    case ErrorKind::UnsupportedOperation:
      return 2;
    case ErrorKind::SingularSystem:
    case ErrorKind::NumericOverflow:
    case ErrorKind::DegenerateBasis:
      return 3;
  }
  return 1;
}

}  // namespace lrnr
