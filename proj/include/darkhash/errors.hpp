#pragma once

#include <stdexcept>
#include <string>

namespace darkhash {

// Root of the library's exception hierarchy. The CLI maps each subclass to a
// distinct exit status (see tools/darkhash.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidInputError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IngestionError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during optimization.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// A checkpoint or other run artifact a stage depends on is absent.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

// The external Hamming kernel was requested but could not be used.
class KernelError : public Error {
 public:
  using Error::Error;
};

}  // namespace darkhash
