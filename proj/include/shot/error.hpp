#pragma once

#include <stdexcept>
#include <string>

namespace shot {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes passed to an op.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf encountered in a value or adjoint.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration, argument or precondition supplied by the caller.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// File could not be read, written or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace shot
