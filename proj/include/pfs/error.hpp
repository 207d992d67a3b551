#pragma once

#include <stdexcept>
#include <string>

namespace pfs {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, inconsistent dimensions or bad arguments.
class ConfigError : public Error {
public:
  using Error::Error;
};

/// A NaN or infinity escaped into a computation.
class NumericError : public Error {
public:
  using Error::Error;
};

/// Layer or checkpoint dimensions do not agree with what the caller expects.
class DimensionError : public ConfigError {
public:
  using ConfigError::ConfigError;
};

/// Reading or parsing a file failed. `kind()` tells callers why.
class FormatError : public Error {
public:
  enum class Kind { io, syntax, version, truncated, dimension, value };

  FormatError(Kind kind, const std::string& what)
      : Error(std::string(kind_name(kind)) + ": " + what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

  static const char* kind_name(Kind k) noexcept {
    switch (k) {
      case Kind::io: return "io";
      case Kind::syntax: return "syntax";
      case Kind::version: return "version";
      case Kind::truncated: return "truncated";
      case Kind::dimension: return "dimension";
      case Kind::value: return "value";
    }
    return "unknown";
  }

private:
  Kind kind_;
};

}  // namespace pfs
