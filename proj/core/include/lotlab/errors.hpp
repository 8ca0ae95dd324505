#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace lotlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes, unknown layer ids, invalid config values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked in a state that does not support it
/// (e.g. querying the effective step before the first optimizer step).
class StateError : public Error {
 public:
  using Error::Error;
};

class CapacityError : public Error {
 public:
  using Error::Error;
};

class DegenerateDataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite value encountered. Carries the layer where it was detected
/// when one applies (empty otherwise).
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::string layer_id)
      : Error(layer_id.empty() ? what : what + " (layer " + layer_id + ")"),
        layer_id_(std::move(layer_id)) {}

  const std::string& layer_id() const noexcept { return layer_id_; }

 private:
  std::string layer_id_;
};

/// Malformed input file; `offset` is the byte position of the problem.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace lotlab
