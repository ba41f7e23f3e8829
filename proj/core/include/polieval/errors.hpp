#pragma once

#include <stdexcept>
#include <string>

namespace polieval {

// Error taxonomy aligned with the CLI exit codes:
// ValidationError -> 1, IoError -> 2, NumericError -> 3.

class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace polieval
