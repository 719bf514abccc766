#pragma once

#include <stdexcept>
#include <string>

namespace fairdiff {

// Base of every error the library throws. The CLI maps the concrete type to
// its exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: bad files, missing keys, violated preconditions (exit 2).
class InputError : public Error {
 public:
  using Error::Error;
};

// A theorem's hypotheses do not hold for the supplied data (exit 3).
class HypothesisError : public Error {
 public:
  using Error::Error;
};

// Non-finite state or an integrand that cannot be evaluated.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairdiff
