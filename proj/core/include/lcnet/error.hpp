#pragma once

#include <stdexcept>
#include <string>

namespace lcnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or layer dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Misuse of the gradient tape (non-scalar loss, consumed tape).
class AutogradError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf detected in activations or loss.
class NumericError : public Error {
 public:
  using Error::Error;
};

// Bad or missing input data: dataset files, labels, checkpoints.
class DataError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public DataError {
 public:
  using DataError::DataError;
};

// Invalid configuration values; `field` names the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error(field + ": " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace lcnet
