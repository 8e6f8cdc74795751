#include "dsel/types.hpp"

#include <atomic>
#include <iostream>

namespace dsel {

namespace {
std::atomic<bool> g_warnings{true};
}

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kMalformedHeader: return "malformed-header";
    case ErrorCode::kDimensionMismatch: return "dimension-mismatch";
    case ErrorCode::kNonFinite: return "non-finite";
    case ErrorCode::kLabelOutOfRange: return "label-out-of-range";
    case ErrorCode::kMissingFile: return "missing-file";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kUnlabeled: return "unlabeled";
    case ErrorCode::kMissingCategoryWeight: return "missing-category-weight";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kZeroNorm: return "zero-norm";
    case ErrorCode::kDivergence: return "divergence";
  }
  return "unknown";
}

bool Error::is_input_error() const noexcept {
  switch (code_) {
    case ErrorCode::kDivergence:
    case ErrorCode::kIo:
      return false;
    default:
      return true;
  }
}

void warn(std::string_view message) {
  if (g_warnings.load(std::memory_order_relaxed)) {
    std::cerr << "warning: " << message << '\n';
  }
}

void set_warnings_enabled(bool enabled) { g_warnings.store(enabled); }

bool warnings_enabled() { return g_warnings.load(); }

}  // namespace dsel
