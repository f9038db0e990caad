#pragma once

#include <stdexcept>
#include <string>

namespace bdflow {

// Bad input to an operation: out-of-range order, empty spectrum, missing L for auto beta, ...
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Nonfinite values, root finder or inner solve failures.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation called on an object that is not ready for it (e.g. history not yet full).
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace bdflow
