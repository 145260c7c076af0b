#pragma once

#include <stdexcept>
#include <string>

namespace tscausal {

// Malformed input, bad configuration, or a format violation. The CLI maps
// this to exit code 1; any other exception is a runtime failure (exit 2).
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace tscausal
