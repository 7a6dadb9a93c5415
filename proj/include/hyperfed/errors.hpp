#pragma once

#include <stdexcept>
#include <string>

namespace hyperfed {

// Root of every error the library throws. Each subclass names one failure
// category so callers (and the CLI exit-code mapping) can dispatch on type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or extents that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// NaN / Inf reached a place where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API misuse: calling an operation outside its contract.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid user-supplied configuration value.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A value lies outside the domain it must be drawn from.
class RangeError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data (bad magic, version, truncated payload).
class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace hyperfed
