#include "clat/common.hpp"

namespace clat {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "IoError";
    case ErrorCode::kBadFormat: return "BadFormat";
    case ErrorCode::kBadMagic: return "BadMagic";
    case ErrorCode::kUnsupportedVersion: return "UnsupportedVersion";
    case ErrorCode::kMissingTensor: return "MissingTensor";
    case ErrorCode::kDimMismatch: return "DimMismatch";
    case ErrorCode::kNonFiniteValue: return "NonFiniteValue";
    case ErrorCode::kEmptyBank: return "EmptyBank";
    case ErrorCode::kIndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kDegenerateBatch: return "DegenerateBatch";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kZeroNorm: return "ZeroNorm";
    case ErrorCode::kNotDecomposed: return "NotDecomposed";
    case ErrorCode::kUnknownMethod: return "UnknownMethod";
    case ErrorCode::kNoActivations: return "NoActivations";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kZeroVariance: return "ZeroVariance";
    case ErrorCode::kEmptyClass: return "EmptyClass";
    case ErrorCode::kEmptySet: return "EmptySet";
    case ErrorCode::kMissingBankVariant: return "MissingBankVariant";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kOutOfRangeInput: return "OutOfRangeInput";
    case ErrorCode::kMissingBaseline: return "MissingBaseline";
    case ErrorCode::kInvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::kBadFormat:
    case ErrorCode::kBadMagic:
    case ErrorCode::kUnsupportedVersion:
    case ErrorCode::kMissingTensor:
    case ErrorCode::kDimMismatch:
    case ErrorCode::kNonFiniteValue:
    case ErrorCode::kEmptyBank:
    case ErrorCode::kUnknownMethod:
    case ErrorCode::kMissingBankVariant:
    case ErrorCode::kMissingBaseline:
    case ErrorCode::kInvalidConfig:
    case ErrorCode::kOutOfRangeInput:
      return true;
    default:
      return false;
  }
}

}  // namespace clat
