#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace rfsep {

enum class ErrorCode {
  shape_mismatch,
  invalid_argument,
  non_finite,
  io,
  format,
  precondition,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::shape_mismatch: return "shape mismatch";
    case ErrorCode::invalid_argument: return "invalid argument";
    case ErrorCode::non_finite: return "non-finite value";
    case ErrorCode::io: return "i/o error";
    case ErrorCode::format: return "format error";
    case ErrorCode::precondition: return "precondition violated";
  }
  return "unknown";
}

// Short identifier used in CLI diagnostics.
inline std::string_view code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::shape_mismatch: return "shape_mismatch";
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::non_finite: return "non_finite";
    case ErrorCode::io: return "io";
    case ErrorCode::format: return "format";
    case ErrorCode::precondition: return "precondition";
  }
  return "unknown";
}

// Every failure raised by the library carries a machine-checkable code.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace rfsep
