#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tinyann {

enum class ErrorCode {
  ShapeMismatch,
  NonFiniteParameter,
  IllegalActivationPlacement,
  LayerwiseKind,
  RangeExceeded,
  EmptyLayer,
  RecurrentLayerPresent,
  PixelOutOfRange,
  TooShort,
  InvalidParams,
  NonSquareImage,
  DivergenceDetected,
  KTooLarge,
  DeltaOverflow,
  CorruptStream,
  UnknownActivationCost,
  ChecksumMismatch,
  VersionUnsupported,
  Truncated,
  ParseError,
  IoError,
  InvalidArgument,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so
/// callers (and tests) can branch on the kind without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace tinyann
