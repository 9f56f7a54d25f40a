#pragma once

#include <stdexcept>
#include <string>

namespace relcast {

/// Base of every error raised by the library. The CLI maps the subclasses
/// onto process exit codes (see cli.hpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// Shape or extent mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "dimension"; }
};

/// NaN/inf where finite values are required, or a diverging loss.
class NumericError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "numeric"; }
};

/// Index outside its valid range (class target, category id, ...).
class IndexError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "index"; }
};

/// Caller broke an API precondition.
class ContractError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "contract"; }
};

/// Malformed or invariant-violating annotation data.
class DataError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "data"; }
};

/// Inconsistent configuration (including corpora mixing feature modes).
class ConfigError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "config"; }
};

/// A split quota could not be satisfied.
class QuotaError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "quota"; }
};

/// Operation not defined for the given input (e.g. Bayes oracle on a
/// feature-coupled generator).
class UnsupportedError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "unsupported"; }
};

}  // namespace relcast
