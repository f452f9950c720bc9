#ifndef MULVULN_ERRORS_HPP
#define MULVULN_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mulvuln {

// Bad configuration or invalid arguments supplied by the caller.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data (records, vocabularies, checkpoints).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor shape incompatibility.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Non-finite values encountered while training.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace mulvuln

#endif  // MULVULN_ERRORS_HPP
