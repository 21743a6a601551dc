// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace frameattn {

// Base for every error thrown by the library. The CLI maps subclasses onto
// its exit-code taxonomy (see exit_code()).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// A violated call contract (non-scalar loss passed to backward, optimizer
// state of the wrong shape, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class ParseError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint file.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IncompatibleVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Non-finite loss during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// 0 ok, 1 configuration / checkpoint mismatch, 2 data / io, 3 numeric abort.
int exit_code(const std::exception& e) noexcept;

}  // namespace frameattn
