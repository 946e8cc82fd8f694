#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hermes {

// Base of every error raised by the library. The CLI maps subclasses onto
// exit codes (usage/config -> 2, everything else -> 1).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

// Violated operation precondition (e.g. backward on a non-scalar).
class ContractError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf produced by a forward op.
class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t position)
      : Error(what + " (at " + std::to_string(position) + ")"), position_(position) {}
  std::size_t position() const { return position_; }

 private:
  std::size_t position_;
};

class UnsupportedFeatureError : public Error {
 public:
  using Error::Error;
};

// Unknown entity id.
class ReferenceError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

// Digest or checkpoint-format mismatch.
class IntegrityError : public Error {
 public:
  using Error::Error;
};

}  // namespace hermes
