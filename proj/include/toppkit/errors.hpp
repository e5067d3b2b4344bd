#pragma once

#include <stdexcept>
#include <string>

namespace toppkit {

// Base of every domain error raised by the toolkit. The CLI maps these to
// exit code 1; anything else escaping is a bug.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-contract inputs (wrong counts, mismatched grids, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// Zero-length paths and similar cases with no meaningful parameterization.
class DegenerateInputError : public InputError {
 public:
  using InputError::InputError;
};

// Failures of a numerical procedure (singular systems, infinite times).
class NumericalError : public Error {
 public:
  using Error::Error;
};

// Chart failures of the attitude parameterization and oversized rotations.
class SingularityError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SimulationFault : public Error {
 public:
  SimulationFault(const std::string& what, long step)
      : Error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

}  // namespace toppkit
