#pragma once

#include <stdexcept>
#include <string>

namespace qsel {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A scalar argument is outside the admissible range.
class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// Caller broke an API contract (e.g. non-scalar loss passed to backward).
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Input data or configuration failed validation.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Required columns or keys are missing from an input file.
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

/// Training diverged.
class TrainingError : public Error {
 public:
  using Error::Error;
};

}  // namespace qsel
