#include "lmd/error.hpp"

namespace lmd {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kEmptyUnion: return "empty-union";
    case ErrorCode::kPreOriginEvent: return "pre-origin event";
    case ErrorCode::kScorerOutputInvalid: return "scorer-output-invalid";
    case ErrorCode::kScorerUnavailable: return "scorer-unavailable";
    case ErrorCode::kWarmUp: return "warm-up";
    case ErrorCode::kDegenerateLabels: return "degenerate-labels";
    case ErrorCode::kKindConflict: return "kind-conflict";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kInputError: return "input-error";
    case ErrorCode::kInvariantViolation: return "invariant-violation";
  }
  return "unknown";
}

Error::Error(ErrorCode code, const std::string& message,
             std::optional<std::uint32_t> window)
    : std::runtime_error(std::string(to_string(code)) + ": " + message),
      code_(code),
      window_(window) {}

Error Error::with_window(std::uint32_t window) const {
  // what() already carries the code prefix; strip it to avoid doubling.
  std::string message = what();
  const auto prefix = std::string(to_string(code_)) + ": ";
  if (message.rfind(prefix, 0) == 0) message.erase(0, prefix.size());
  return Error(code_, message, window);
}

}  // namespace lmd
