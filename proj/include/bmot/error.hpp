#pragma once

#include <stdexcept>
#include <string>

namespace bmot {

// Base of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the domain of an operation (non-finite input,
// probability outside (0,1), depth below the threshold, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Parameter bundle violating its invariants.
class InvalidParameters : public Error {
 public:
  using Error::Error;
};

// Truncation interval carrying no probability mass.
class DegenerateInterval : public Error {
 public:
  using Error::Error;
};

// Inconsistent configuration: threshold mismatch, straddling observation,
// bad sampler settings, malformed input files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during inference (adaptation failure, degenerate chains).
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace bmot
