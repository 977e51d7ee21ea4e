#include "tinyann/error.hpp"

namespace tinyann {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteParameter: return "NonFiniteParameter";
    case ErrorCode::IllegalActivationPlacement: return "IllegalActivationPlacement";
    case ErrorCode::LayerwiseKind: return "LayerwiseKind";
    case ErrorCode::RangeExceeded: return "RangeExceeded";
    case ErrorCode::EmptyLayer: return "EmptyLayer";
    case ErrorCode::RecurrentLayerPresent: return "RecurrentLayerPresent";
    case ErrorCode::PixelOutOfRange: return "PixelOutOfRange";
    case ErrorCode::TooShort: return "TooShort";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::NonSquareImage: return "NonSquareImage";
    case ErrorCode::DivergenceDetected: return "DivergenceDetected";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::DeltaOverflow: return "DeltaOverflow";
    case ErrorCode::CorruptStream: return "CorruptStream";
    case ErrorCode::UnknownActivationCost: return "UnknownActivationCost";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::VersionUnsupported: return "VersionUnsupported";
    case ErrorCode::Truncated: return "Truncated";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

}  // namespace tinyann
