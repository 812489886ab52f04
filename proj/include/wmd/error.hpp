#pragma once

#include <stdexcept>
#include <string>

namespace wmd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input data: a probability vector with negative entries or a bad sum,
/// a parameter outside its admissible range.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition of an operation was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// The vocabulary is too small to hold a requested configuration.
class CapacityError : public Error {
 public:
  using Error::Error;
};

/// All probability mass sits on one side of a red/green partition.
class DegenerateSupportError : public Error {
 public:
  using Error::Error;
};

/// Quadrature or optimisation failed to converge.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// File or stream failures; messages carry the path and line where relevant.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace wmd
