#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace hierprobe {

enum class ErrorCode {
  ZeroVector,
  ShapeMismatch,
  LayerOutOfRange,
  SpaceMismatch,
  InvalidArgument,
  EmptyBatch,
  TooFewSamples,
  DegenerateData,
  InsufficientDimension,
  DimensionMismatch,
  MissingEstimate,
  ScoreOutOfRange,
  UnknownConcept,
  WorkerUnavailable,
  WorkerError,
  ProtocolViolation,
  Io,
  Config,
};

std::string_view to_string(ErrorCode code) noexcept;

/// The single exception type thrown by the library. The code identifies the
/// contract that was violated; the message carries the specifics.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace hierprobe
