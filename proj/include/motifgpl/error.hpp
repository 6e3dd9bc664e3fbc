#pragma once

#include <stdexcept>
#include <string>

namespace motifgpl {

/// Bad input: malformed files, out-of-range parameters, violated preconditions.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A statistic or computation that is not defined for the given input
/// (zero-variance Moran's I, empty class during projection, ...).
class UndefinedError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace motifgpl
