#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace creaseforge {

enum class ErrorCode {
  InvalidArgument,
  FewerThanFivePoints,
  DuplicateAbscissa,
  NonFiniteInput,
  InsufficientSamples,
  CholeskyFailure,
  IndexOutOfRange,
  ImageTooSmall,
  TooFewSamples,
  InvalidRange,
  StepOutOfRange,
  ShapeMismatch,
  EmptyBatch,
  SingularSystem,
  NonFiniteState,
  NonAffineDenoiser,
  NoGenuinePairs,
  NoImposterPairs,
  ZeroNormCenter,
  ResolutionMismatch,
  EmptyScores,
  ParseError,
  IoError,
  UsageError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it to an exit status.
class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), message_(message) {}

  ErrorCode code() const noexcept { return code_; }
  /// The message without the code prefix, for re-wrapping with context.
  const std::string& message() const noexcept { return message_; }

private:
  ErrorCode code_;
  std::string message_;
};

}  // namespace creaseforge
