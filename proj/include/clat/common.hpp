#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace clat {

using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class ErrorCode {
  kIo,
  kBadFormat,
  kBadMagic,
  kUnsupportedVersion,
  kMissingTensor,
  kDimMismatch,
  kNonFiniteValue,
  kEmptyBank,
  kIndexOutOfRange,
  kEmptyDataset,
  kDegenerateBatch,
  kDegenerateInput,
  kZeroNorm,
  kNotDecomposed,
  kUnknownMethod,
  kNoActivations,
  kTooFewSamples,
  kZeroVariance,
  kEmptyClass,
  kEmptySet,
  kMissingBankVariant,
  kSingleClass,
  kOutOfRangeInput,
  kMissingBaseline,
  kInvalidConfig,
};

std::string_view to_string(ErrorCode code);

// Every failure the engine reports carries one of the codes above so callers
// (and the CLI exit-status mapping) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Validation errors are problems with user-supplied inputs; everything else is
// a runtime failure of the computation.
bool is_validation_error(ErrorCode code);

inline void require(bool ok, ErrorCode code, const std::string& what) {
  if (!ok) throw Error(code, what);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

// Pseudo-component ids: the SAE bias and the reconstruction error are treated
// as components d_sae and d_sae + 1 with activation fixed to one.
inline std::size_t bias_component(std::size_t d_sae) { return d_sae; }
inline std::size_t error_component(std::size_t d_sae) { return d_sae + 1; }

}  // namespace clat
