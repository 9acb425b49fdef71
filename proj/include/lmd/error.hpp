#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace lmd {

enum class ErrorCode : std::uint8_t {
  kEmptyUnion,
  kPreOriginEvent,
  kScorerOutputInvalid,
  kScorerUnavailable,
  kWarmUp,
  kDegenerateLabels,
  kKindConflict,
  kInvalidArgument,
  kInputError,
  kInvariantViolation,
};

/// Stable, machine-readable tag for an error code ("empty-union", ...).
std::string_view to_string(ErrorCode code);

/// The single exception type thrown by the library. Carries the window
/// ordinal when the failure happened while processing a specific window.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message,
        std::optional<std::uint32_t> window = std::nullopt);

  ErrorCode code() const noexcept { return code_; }
  std::optional<std::uint32_t> window() const noexcept { return window_; }

  /// Same error, annotated with the window it occurred in.
  Error with_window(std::uint32_t window) const;

 private:
  ErrorCode code_;
  std::optional<std::uint32_t> window_;
};

}  // namespace lmd
