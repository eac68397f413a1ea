#pragma once

#include <stdexcept>
#include <string>

namespace diffdvr {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class UnsupportedConfiguration : public Error {
 public:
  using Error::Error;
};

// Raised when an optimizer sees NaN/Inf gradients.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class CorruptFile : public Error {
 public:
  using Error::Error;
};

class MissingMetadata : public Error {
 public:
  using Error::Error;
};

}  // namespace diffdvr
