#pragma once

#include <stdexcept>
#include <string>

namespace xnn {

// Base of every error raised by the library. The subclasses map onto the
// command-line exit codes (config 2, data 3, numeric/runtime 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
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

class NumericError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  CheckpointError(std::string field, const std::string& what)
      : Error("checkpoint field '" + field + "': " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace xnn
