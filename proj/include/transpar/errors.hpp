#pragma once

#include <stdexcept>
#include <string>

namespace transpar {

/// Invalid input, shape mismatch, bad file or CLI argument. Maps to exit code 2.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

/// A NaN or Inf appeared in a forward value or a gradient. Maps to exit code 3.
class NumericFailure : public std::runtime_error {
 public:
  explicit NumericFailure(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace transpar
