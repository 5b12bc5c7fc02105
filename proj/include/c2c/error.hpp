#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace c2c {

enum class ErrorKind {
  kInvalidInput,
  kCacheMismatch,
  kTemplateError,
  kNumericalError,
  kConfigError,
  kDataError,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace c2c
