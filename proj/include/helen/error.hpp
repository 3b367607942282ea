#pragma once

#include <stdexcept>
#include <string>

namespace helen {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument, configuration value or precondition violation.
class ValueError : public Error {
 public:
  using Error::Error;
};

/// API used out of order (e.g. backward before forward).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// NaN or Inf produced during evaluation.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File could not be opened, read or parsed.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace helen
