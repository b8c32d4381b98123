#pragma once

#include <stdexcept>
#include <string>

namespace edgeseg {

// Error categories; the CLI maps each category to a distinct exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Malformed file contents (headers, checkpoints).
class FormatError : public Error {
 public:
  using Error::Error;
};

// Declared size and stored data disagree.
class TruncationError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Tensor/volume shape is illegal for the requested operation; a flavour of
// broken precondition, so it inherits from ContractViolation.
class ShapeError : public ContractViolation {
 public:
  using ContractViolation::ContractViolation;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Checkpoint contents do not match the model (strict mode).
class LoadError : public Error {
 public:
  using Error::Error;
};

}  // namespace edgeseg
