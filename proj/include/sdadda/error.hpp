#pragma once

#include <stdexcept>
#include <string>

namespace sdadda {

// Bad input, shape, range or configuration. The CLI maps these to exit code 3.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

// A mathematical precondition failed (log of a non-positive variance, etc.).
class DomainError : public ValidationError {
 public:
  explicit DomainError(const std::string& what) : ValidationError(what) {}
};

// Runtime numeric breakdown (NaN/Inf during forward, backward or the update).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// File system and format problems.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace sdadda
