#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rbb {

enum class ErrorCode {
  kNotStronglyConnected,
  kDuplicateEdge,
  kSelfLoop,
  kNonPositiveCapacity,
  kDimensionMismatch,
  kEmptyVector,
  kUnreachable,
  kSameEndpoints,
  kInvalidNode,
  kShapeMismatch,
  kNonPositiveTemperature,
  kNotScalarOutput,
  kInputNotOnTape,
  kInvalidParameters,
  kDivergedLoss,
  kEmptyValidationSet,
  kNonFiniteGradient,
  kSyntax,
  kUnknownField,
  kMissingField,
  kBadReference,
  kUnsupportedFeature,
  kNoConvergence,
  kIo,
};

std::string_view to_string(ErrorCode code);

/// Exception carrying a machine-checkable code; all library failures use it.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rbb
