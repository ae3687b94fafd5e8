#pragma once

#include <stdexcept>
#include <string>

namespace odmn {

/// Base of all library errors.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Bad arguments or configuration (CLI exit code 2).
class UsageError : public Error {
public:
  using Error::Error;
};

/// Unreadable, malformed or inconsistent input data (exit code 3).
class DataError : public Error {
public:
  using Error::Error;
};

/// Singular systems, divergence, non-convergence (exit code 4).
class NumericalError : public Error {
public:
  using Error::Error;
};

} // namespace odmn
