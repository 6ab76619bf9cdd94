#pragma once

#include <stdexcept>
#include <string>

namespace depgcn {

/// Base class for every error raised by the library. The CLI maps the
/// concrete subclass onto an exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration value or combination (exit code 1).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or out-of-domain input data (exit code 2).
class InputError : public Error {
 public:
  using Error::Error;
};

/// Value outside a documented table range.
class RangeError : public InputError {
 public:
  using InputError::InputError;
};

/// Tensor dimensions disagree.
class ShapeError : public InputError {
 public:
  using InputError::InputError;
};

/// Corrupt, truncated or version-mismatched file.
class FormatError : public InputError {
 public:
  using InputError::InputError;
};

}  // namespace depgcn
