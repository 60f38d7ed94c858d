#pragma once

#include <stdexcept>
#include <string>

namespace dsbf {

// Every error raised by the library derives from Error. The CLI maps the
// concrete kind onto its process exit code.
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

class NumericalError : public Error {
 public:
  using Error::Error;
};

// Raised when a factorization meets a non-positive pivot.
class SingularityError : public NumericalError {
 public:
  SingularityError(const std::string& what, std::size_t pivot_index, double pivot_value)
      : NumericalError(what), pivot_index_(pivot_index), pivot_value_(pivot_value) {}

  std::size_t pivot_index() const noexcept { return pivot_index_; }
  double pivot_value() const noexcept { return pivot_value_; }

 private:
  std::size_t pivot_index_;
  double pivot_value_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised when code reaches into a dataset that has been sealed for
// evaluation-only use (the held-out target).
class SealedDatasetError : public Error {
 public:
  using Error::Error;
};

}  // namespace dsbf
