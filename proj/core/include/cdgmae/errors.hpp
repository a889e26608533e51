#pragma once

#include <stdexcept>
#include <string>

namespace cdgmae {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A documented precondition was violated by the caller.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input is well-formed but mathematically degenerate (e.g. a zero-norm vector).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Training or verification produced a non-finite or out-of-tolerance value.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace cdgmae
