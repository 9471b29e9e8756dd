#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace labelforge {

enum class ErrorCode {
  invalid_argument,
  not_found,
  conflict,
  permission_denied,
  unauthenticated,
  illegal_transition,
  precondition_failed,
  payload_too_large,
  internal,
};

std::string_view to_string(ErrorCode code);

// Single exception type thrown across the library. `details` carries one
// entry per violated rule when validation collects several at once.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::vector<std::string> details = {})
      : std::runtime_error(message), code_(code), details_(std::move(details)) {}

  ErrorCode code() const noexcept { return code_; }
  const std::vector<std::string>& details() const noexcept { return details_; }

 private:
  ErrorCode code_;
  std::vector<std::string> details_;
};

}  // namespace labelforge
