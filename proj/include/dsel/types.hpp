#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <string_view>

namespace dsel {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

// Error classes. The CLI maps these onto exit codes, so keep them distinct.
enum class ErrorCode {
  kMalformedHeader,
  kDimensionMismatch,
  kNonFinite,
  kLabelOutOfRange,
  kMissingFile,
  kIo,
  kUnlabeled,
  kMissingCategoryWeight,
  kInvalidArgument,
  kInfeasible,
  kZeroNorm,
  kDivergence,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  // Input errors are the user's fault (bad file, bad flag); everything else
  // is a failure inside the pipeline.
  bool is_input_error() const noexcept;

 private:
  ErrorCode code_;
};

// Diagnostic stream. Warnings go to stderr unless silenced; tests silence them.
void warn(std::string_view message);
void set_warnings_enabled(bool enabled);
bool warnings_enabled();

}  // namespace dsel
