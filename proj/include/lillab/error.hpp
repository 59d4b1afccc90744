#pragma once

#include <stdexcept>
#include <string>

namespace lillab {

// Invalid inputs / broken preconditions. The CLI maps these to exit code 1.
// A failing certificate is a regular result, never an exception.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure inside an algorithm (singular solve, non-convergence).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lillab
