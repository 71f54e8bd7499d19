#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace calib {

enum class ErrorCode {
  kInvalidArgument,
  kInvalidRotation,
  kPointBehindCamera,
  kJointDimensionMismatch,
  kOutOfBounds,
  kChannelMismatch,
  kZeroQueryFeature,
  kLengthMismatch,
  kTooFewVisible,
  kDegenerateGeometry,
  kSolverFailure,
  kNoConsensus,
  kShapeMismatch,
  kZeroGradientRegion,
  kPlacementFailure,
  kConventionMismatch,
  kParseError,
  kIoError,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported through this type. The code is stable
// and is what callers (and the CLI exit-code mapping) switch on.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace calib
