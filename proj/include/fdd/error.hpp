#pragma once

#include <stdexcept>
#include <string>

namespace fdd {

/// Base of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad user input: empty sets, out-of-range parameters, unreadable files.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Tensor or matrix extents that do not line up.
class DimensionError : public InputError {
 public:
  using InputError::InputError;
};

/// A model or experiment configuration that can never run.
class ConfigError : public InputError {
 public:
  using InputError::InputError;
};

/// Corrupt, truncated or foreign binary files.
class ChecksumError : public InputError {
 public:
  using InputError::InputError;
};

/// NaN/Inf encountered, or a residual far outside rounding tolerance.
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

[[noreturn]] inline void throw_dimension(const std::string& what) {
  throw DimensionError(what);
}

}  // namespace detail
}  // namespace fdd
