#pragma once

#include <stdexcept>
#include <string>

namespace ipr {

// Error taxonomy shared by the library and the CLI.  The CLI maps these to
// process exit codes: input/config problems -> 2, I/O problems -> 3,
// numerical aborts -> 4.

struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Zero-norm vectors and similar inputs where a result is undefined.
struct DegenerateInputError : NumericalError {
  using NumericalError::NumericalError;
};

struct ParseError : InputError {
  using InputError::InputError;
};

struct ValidationError : InputError {
  using InputError::InputError;
};

}  // namespace ipr
