#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace tacro {

enum class ErrorCode {
  kInvalidProfile,
  kOrdering,
  kMissingTrough,
  kImputationDegenerate,
  kConfiguration,
  kDegenerateParameters,
  kSchema,
  kDegenerateSlope,
  kLogDomain,
  kUndefinedSplit,
  kUndefinedLeaf,
  kEmptyData,
  kFitFailed,
  kLeakage,
  kIo,
};

constexpr std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidProfile: return "INVALID_PROFILE";
    case ErrorCode::kOrdering: return "ORDERING";
    case ErrorCode::kMissingTrough: return "MISSING_TROUGH";
    case ErrorCode::kImputationDegenerate: return "IMPUTATION_DEGENERATE";
    case ErrorCode::kConfiguration: return "CONFIGURATION";
    case ErrorCode::kDegenerateParameters: return "DEGENERATE_PARAMETERS";
    case ErrorCode::kSchema: return "SCHEMA";
    case ErrorCode::kDegenerateSlope: return "DEGENERATE_SLOPE";
    case ErrorCode::kLogDomain: return "LOG_DOMAIN";
    case ErrorCode::kUndefinedSplit: return "UNDEFINED_SPLIT";
    case ErrorCode::kUndefinedLeaf: return "UNDEFINED_LEAF";
    case ErrorCode::kEmptyData: return "EMPTY_DATA";
    case ErrorCode::kFitFailed: return "FIT_FAILED";
    case ErrorCode::kLeakage: return "LEAKAGE";
    case ErrorCode::kIo: return "IO";
  }
  return "UNKNOWN";
}

/// Every failure raised by the library carries a stable machine-readable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return error_code_name(code_); }

 private:
  ErrorCode code_;
};

}  // namespace tacro
