#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gground {

enum class Errc {
  MalformedOutput,
  OutOfRange,
  DegenerateBox,
  InvalidGeometry,
  EmptyCrop,
  InvalidConfig,
  EmptyInput,
  NoElements,
  NonDigitTarget,
  InvalidScheme,
  DimensionMismatch,
  MissingAsset,
  EmptyInstruction,
  NoJsonBlock,
  BadJson,
  MissingKey,
  BadEnum,
  AuthError,
  Timeout,
  RateLimited,
  ProtocolError,
  EmptyRollouts,
  IoFailure,
  SchemaError,
  MissingImage,
  UnknownRecordId,
  InvalidArgument,
};

inline std::string_view to_string(Errc code) {
  switch (code) {
    case Errc::MalformedOutput: return "MalformedOutput";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::DegenerateBox: return "DegenerateBox";
    case Errc::InvalidGeometry: return "InvalidGeometry";
    case Errc::EmptyCrop: return "EmptyCrop";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::NoElements: return "NoElements";
    case Errc::NonDigitTarget: return "NonDigitTarget";
    case Errc::InvalidScheme: return "InvalidScheme";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::MissingAsset: return "MissingAsset";
    case Errc::EmptyInstruction: return "EmptyInstruction";
    case Errc::NoJsonBlock: return "NoJsonBlock";
    case Errc::BadJson: return "BadJson";
    case Errc::MissingKey: return "MissingKey";
    case Errc::BadEnum: return "BadEnum";
    case Errc::AuthError: return "AuthError";
    case Errc::Timeout: return "Timeout";
    case Errc::RateLimited: return "RateLimited";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::EmptyRollouts: return "EmptyRollouts";
    case Errc::IoFailure: return "IoFailure";
    case Errc::SchemaError: return "SchemaError";
    case Errc::MissingImage: return "MissingImage";
    case Errc::UnknownRecordId: return "UnknownRecordId";
    case Errc::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

/// The single exception type thrown by the library. `code()` is stable and
/// machine-readable; `what()` carries the human detail.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(to_string(code)) + ": " + detail), code_(code) {}

  [[nodiscard]] Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace gground
