#pragma once

#include <stdexcept>
#include <string>

namespace ehrcvd {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or inconsistent input data (records, cohorts, files).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values (hyperparameters, score configs, schemas).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values or divergence during numeric work.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace ehrcvd
