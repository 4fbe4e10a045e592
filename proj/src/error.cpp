#include "creaseforge/error.hpp"

namespace creaseforge {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::FewerThanFivePoints: return "FewerThanFivePoints";
    case ErrorCode::DuplicateAbscissa: return "DuplicateAbscissa";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::CholeskyFailure: return "CholeskyFailure";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::TooFewSamples: return "TooFewSamples";
    case ErrorCode::InvalidRange: return "InvalidRange";
    case ErrorCode::StepOutOfRange: return "StepOutOfRange";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::NonFiniteState: return "NonFiniteState";
    case ErrorCode::NonAffineDenoiser: return "NonAffineDenoiser";
    case ErrorCode::NoGenuinePairs: return "NoGenuinePairs";
    case ErrorCode::NoImposterPairs: return "NoImposterPairs";
    case ErrorCode::ZeroNormCenter: return "ZeroNormCenter";
    case ErrorCode::ResolutionMismatch: return "ResolutionMismatch";
    case ErrorCode::EmptyScores: return "EmptyScores";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::UsageError: return "UsageError";
  }
  return "Unknown";
}

}  // namespace creaseforge
