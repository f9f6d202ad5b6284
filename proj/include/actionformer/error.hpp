// Copyright 2026 The actionformer-cpp Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ACTIONFORMER_ERROR_HPP
#define ACTIONFORMER_ERROR_HPP

#include <stdexcept>
#include <string>

namespace actionformer {

/// Broad failure categories. The CLI maps each one to a distinct exit code.
enum class ErrorKind {
  kInvalidArgument,
  kShapeMismatch,
  kIo,
  kFormat,
  kConfig,
  kNumerical,
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidArgument: return "invalid_argument";
    case ErrorKind::kShapeMismatch: return "shape_mismatch";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kNumerical: return "numerical";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace actionformer

#endif  // ACTIONFORMER_ERROR_HPP
