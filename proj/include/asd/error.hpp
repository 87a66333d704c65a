#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace asd {

enum class ErrorCode {
  MalformedName,
  UnsupportedFormat,
  CorruptHeader,
  EmptyDataset,
  InvalidSpec,
  ClipTooShort,
  InsufficientData,
  ShapeMismatch,
  Precondition,
  NonFiniteActivation,
  VersionMismatch,
  CorruptFile,
  SingularCovariance,
  InsufficientFrames,
  EmptySet,
  PTooSmall,
  MissingCell,
  MissingModel,
  UnmatchedClip,
  InvalidConfig,
  Io,
};

std::string_view to_string(ErrorCode code);

// Single exception type for the library. `index` carries an optional
// position (the failing 1-based filename token for MalformedName).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, int index = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code),
        index_(index),
        message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  int index() const noexcept { return index_; }
  // Message without the code prefix, for re-wrapping with more context.
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  int index_;
  std::string message_;
};

}  // namespace asd
