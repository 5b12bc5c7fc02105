#include "c2c/error.hpp"

namespace c2c {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "InvalidInput";
    case ErrorKind::kCacheMismatch: return "CacheMismatch";
    case ErrorKind::kTemplateError: return "TemplateError";
    case ErrorKind::kNumericalError: return "NumericalError";
    case ErrorKind::kConfigError: return "ConfigError";
    case ErrorKind::kDataError: return "DataError";
  }
  return "Unknown";
}

}  // namespace c2c
