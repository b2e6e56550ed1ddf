#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sisn {

// Failure classes surfaced to callers. The CLI prints the class name as a
// machine-parsable prefix, so names are stable.
enum class ErrorKind {
  kInvalidArgument,
  kShapeMismatch,
  kMissingFile,
  kUnsupportedFormat,
  kTruncatedData,
  kWriteFailure,
  kParse,
  kVersionMismatch,
  kCorrupt,
  kScaleMismatch,
  kDivergence,
};

std::string_view error_kind_name(ErrorKind kind);

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
  if (!condition) throw Error(kind, message);
}

}  // namespace sisn
