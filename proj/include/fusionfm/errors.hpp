#pragma once

#include <stdexcept>
#include <string>

namespace fusionfm {

// Every failure the library raises derives from Error. The CLI maps the
// three families onto exit codes: config 2, data 3, numeric 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

// Shape/dimension mismatches are data problems.
class DimensionError : public DataError {
 public:
  using DataError::DataError;
};

// A value outside the domain an operation accepts.
class DomainError : public DataError {
 public:
  using DataError::DataError;
};

// Using a component before it is ready (e.g. an untrained network).
class StateError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

}  // namespace fusionfm
