#pragma once

#include <stdexcept>
#include <string>

namespace zdiff {

// Every library error derives from Error so callers can map categories to
// process exit codes (config 2, data 3, numerical 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (interchange files, missing classes).
class DataError : public Error {
 public:
  using Error::Error;
};

class FormatError : public DataError {
 public:
  using DataError::DataError;
};

// Non-finite values, non-deterministic loss functions and similar failures.
class NumericalError : public Error {
 public:
  using Error::Error;
};

}  // namespace zdiff
