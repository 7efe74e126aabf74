#pragma once

#include <stdexcept>
#include <string>

namespace dynetforge {

// Bad arguments, incompatible shapes or flags. Maps to CLI exit code 1.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ShapeError : public UsageError {
 public:
  using UsageError::UsageError;
};

// Non-finite values, solver step underflow, diverging training. Exit code 2.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or corrupted dataset/checkpoint files.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dynetforge
