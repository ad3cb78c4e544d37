#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace mopro {

/// Base of every error the library throws. Each subclass maps onto one CLI
/// exit code (see tools/mopro.cpp).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes that cannot be combined.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Inputs for which an operation has no defined value (zero-norm rows, empty
/// classes, antipodal means).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration values or unparseable config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Operation invoked in the wrong lifecycle state.
class StateError : public Error {
 public:
  using Error::Error;
};

/// A caller broke a documented precondition.
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// Persisted state that does not fit the model or dataset it is paired with.
class StructuralError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed binary file; carries the byte offset where decoding failed.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t offset)
      : Error(what + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_;
};

}  // namespace mopro
