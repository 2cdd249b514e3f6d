#pragma once

#include <stdexcept>
#include <string>

namespace mfa {

/// Invalid input, shape, configuration or file contents. Maps to CLI exit code 1.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Numeric breakdown at runtime (non-finite loss and the like). Maps to CLI exit code 2.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mfa
