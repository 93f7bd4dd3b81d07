#include "rbb/errors.hpp"

namespace rbb {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotStronglyConnected: return "NotStronglyConnected";
    case ErrorCode::kDuplicateEdge: return "DuplicateEdge";
    case ErrorCode::kSelfLoop: return "SelfLoop";
    case ErrorCode::kNonPositiveCapacity: return "NonPositiveCapacity";
    case ErrorCode::kDimensionMismatch: return "DimensionMismatch";
    case ErrorCode::kEmptyVector: return "EmptyVector";
    case ErrorCode::kUnreachable: return "Unreachable";
    case ErrorCode::kSameEndpoints: return "SameEndpoints";
    case ErrorCode::kInvalidNode: return "InvalidNode";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kNonPositiveTemperature: return "NonPositiveTemperature";
    case ErrorCode::kNotScalarOutput: return "NotScalarOutput";
    case ErrorCode::kInputNotOnTape: return "InputNotOnTape";
    case ErrorCode::kInvalidParameters: return "InvalidParameters";
    case ErrorCode::kDivergedLoss: return "DivergedLoss";
    case ErrorCode::kEmptyValidationSet: return "EmptyValidationSet";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kSyntax: return "Syntax";
    case ErrorCode::kUnknownField: return "UnknownField";
    case ErrorCode::kMissingField: return "MissingField";
    case ErrorCode::kBadReference: return "BadReference";
    case ErrorCode::kUnsupportedFeature: return "UnsupportedFeature";
    case ErrorCode::kNoConvergence: return "NoConvergence";
    case ErrorCode::kIo: return "Io";
  }
  return "Unknown";
}

}  // namespace rbb
